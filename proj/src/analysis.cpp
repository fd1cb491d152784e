#include "casimir/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

#include "casimir/constants.hpp"
#include "casimir/instrument.hpp"
#include "casimir/numerics/least_squares.hpp"
#include "casimir/numerics/spline.hpp"

namespace casimir {

int RunSet::accepted() const {
  return static_cast<int>(std::count_if(status.begin(), status.end(), [](const SweepStatus& s) { return s.accepted; }));
}

std::size_t centre_point(const SweepRecord& sweep) {
  if (sweep.points.empty()) throw ValidationError("sweep has no points");
  const std::size_t nominal = 15;
  if (sweep.points.size() == 34) return nominal;
  return (sweep.points.size() - 1) / 2;
}

namespace {

struct ChannelFit {
  double a0 = 0.0;
  double var = 0.0;
  double residual_rel = 0.0;
  Eigen::VectorXd residual_m;  // residuals mapped to distance
};

ChannelFit fit_channel(const std::vector<double>& a_pz, const std::vector<double>& v, double max_residual_rel) {
  const auto n = static_cast<Eigen::Index>(a_pz.size());
  Eigen::MatrixXd A(n, 2);
  Eigen::VectorXd y(n);
  double scale = 0.0, lo = a_pz.front(), hi = a_pz.front();
  for (Eigen::Index i = 0; i < n; ++i) {
    A(i, 0) = 1.0;
    A(i, 1) = a_pz[static_cast<std::size_t>(i)];
    y[i] = v[static_cast<std::size_t>(i)];
    scale += std::abs(y[i]) / static_cast<double>(n);
    lo = std::min(lo, A(i, 1));
    hi = std::max(hi, A(i, 1));
  }
  // centre the regressor for conditioning
  const double mid = 0.5 * (lo + hi);
  A.col(1).array() -= mid;
  const auto fit = numerics::linear_least_squares(A, y);
  const double b0 = fit.coefficients[0], b1 = fit.coefficients[1];
  const double sb1 = std::sqrt(std::max(0.0, fit.covariance(1, 1)));
  if (!(b1 < 0.0) || std::abs(b1) * (hi - lo) < 1e-6 * scale || std::abs(b1) <= 3.0 * sb1)
    throw CalibrationQualityError("fit_a0: excitation voltages show no separation dependence");
  ChannelFit out;
  out.residual_rel = fit.residual_rms / scale;
  if (out.residual_rel > max_residual_rel) {
    std::ostringstream msg;
    msg << "fit_a0: relative residual " << out.residual_rel << " above " << max_residual_rel;
    throw CalibrationQualityError(msg.str());
  }
  out.a0 = mid - b0 / b1;
  const Eigen::Vector2d g(-1.0 / b1, b0 / (b1 * b1));
  out.var = g.dot(fit.covariance * g);
  out.residual_m = (y - A * fit.coefficients) / b1;
  return out;
}

}  // namespace

A0Fit fit_a0(const SweepRecord& sweep, double max_residual_rel, double drift_rate) {
  if (sweep.points.size() < 3) throw ValidationError("fit_a0: need >= 3 points");
  const double tc = sweep.points[centre_point(sweep)].t;
  std::vector<double> a_pz, v_ac, v_ex;
  for (const auto& p : sweep.points) {
    // a = a0 + r (t - tc) - a_pz, so fold the drift into the regressor
    a_pz.push_back(p.a_pz - drift_rate * (p.t - tc));
    v_ac.push_back(p.v_ac);
    v_ex.push_back(p.v_ex);
  }
  std::vector<ChannelFit> fits;
  for (const auto* v : {&v_ac, &v_ex})
    if (std::any_of(v->begin(), v->end(), [](double x) { return x != 0.0; }))
      fits.push_back(fit_channel(a_pz, *v, max_residual_rel));
  if (fits.empty()) throw CalibrationQualityError("fit_a0: no excitation voltages recorded");
  double sw = 0.0, swx = 0.0, res = 0.0;
  for (const auto& f : fits) {
    const double w = 1.0 / (f.var + 1e-40);
    sw += w;
    swx += w * f.a0;
    res = std::max(res, f.residual_rel);
  }
  // Both channels see the same piezo read-out, so their errors are correlated.
  double var = 1.0 / sw;
  if (fits.size() == 2) {
    const Eigen::ArrayXd r1 = fits[0].residual_m.array() - fits[0].residual_m.mean();
    const Eigen::ArrayXd r2 = fits[1].residual_m.array() - fits[1].residual_m.mean();
    const double den = std::sqrt((r1 * r1).sum() * (r2 * r2).sum());
    const double rho = den > 0.0 ? std::clamp((r1 * r2).sum() / den, -1.0, 1.0) : 0.0;
    const double w1 = 1.0 / (fits[0].var + 1e-40), w2 = 1.0 / (fits[1].var + 1e-40);
    var = (w1 + w2 + 2.0 * rho * w1 * w2 * std::sqrt(fits[0].var * fits[1].var)) / (sw * sw);
  }
  return {swx / sw, std::sqrt(std::max(var, 0.0)), res};
}

RunSet make_runset(std::vector<SweepRecord> sweeps) {
  std::stable_sort(sweeps.begin(), sweeps.end(),
                   [](const SweepRecord& a, const SweepRecord& b) { return a.index < b.index; });
  RunSet rs;
  for (const auto& s : sweeps) {
    if (s.version != kSweepRecordVersion)
      throw ValidationError("sweep record version " + std::to_string(s.version) + " is not supported");
    SweepStatus st;
    st.index = s.index;
    try {
      const auto f = fit_a0(s);
      st.a0 = f.a0;
      st.sigma_a0 = f.sigma_a0;
    } catch (const Error&) {
      st.accepted = false;
      st.reason = kReasonA0Fit;
    }
    rs.status.push_back(st);
  }
  rs.sweeps = std::move(sweeps);
  return rs;
}

RunSet screen_sweeps(RunSet rs, const ScreeningRules& rules) {
  std::vector<std::size_t> order(rs.sweeps.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rs.sweeps[a].index < rs.sweeps[b].index; });
  RunSet out;
  for (auto i : order) {
    out.sweeps.push_back(rs.sweeps[i]);
    out.status.push_back(rs.status[i]);
  }
  const double tol = 1e-15;
  const SweepStatus* previous = nullptr;   // last sweep with a fitted a0
  const SweepStatus* reference = nullptr;  // last accepted sweep with a drift value
  for (auto& st : out.status) {
    if (st.reason == kReasonA0Fit) continue;
    st.accepted = true;
    st.reason.clear();
    st.delta_a0 = previous ? st.a0 - previous->a0 : 0.0;
    if (previous) {
      if (std::abs(st.delta_a0) > rules.max_delta_a0 + tol) {
        st.accepted = false;
        st.reason = kReasonDa0;
      } else if (reference && std::abs(st.delta_a0 - reference->delta_a0) > rules.max_delta_delta_a0 + tol) {
        st.accepted = false;
        st.reason = kReasonDda0;
      }
    }
    if (previous && st.accepted) reference = &st;
    previous = &st;
  }
  return out;
}

std::vector<CorrectedPoint> interpolate_drift(const RunSet& rs, const DriftOptions& options) {
  std::vector<std::size_t> used;
  for (std::size_t i = 0; i < rs.sweeps.size(); ++i)
    if (rs.status[i].accepted && !rs.sweeps[i].points.empty()) used.push_back(i);
  if (used.empty()) throw ValidationError("analysis: no accepted sweeps");

  const auto n = static_cast<Eigen::Index>(used.size());
  Eigen::VectorXd tc(n), a0(n), tw(n), w0(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& s = rs.sweeps[used[static_cast<std::size_t>(j)]];
    tc[j] = s.points[centre_point(s)].t;
    a0[j] = rs.status[used[static_cast<std::size_t>(j)]].a0;
    tw[j] = s.t_cal;
    w0[j] = s.omega0_cal;
  }
  for (Eigen::Index j = 1; j < n; ++j)
    if (!(tc[j] > tc[j - 1]) || !(tw[j] > tw[j - 1]))
      throw ValidationError("analysis: sweep times must increase with the sweep index");
  std::vector<double> sa0(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) sa0[static_cast<std::size_t>(j)] = rs.status[used[static_cast<std::size_t>(j)]].sigma_a0;
  numerics::NaturalCubicSpline a0_of_t, w0_of_t;
  if (n >= 2) {
    a0_of_t = numerics::NaturalCubicSpline(tc, a0);
    w0_of_t = numerics::NaturalCubicSpline(tw, w0);
    for (int pass = 0; pass < options.refine_passes; ++pass) {
      Eigen::VectorXd next = a0;
      for (Eigen::Index j = 0; j < n; ++j) {
        try {
          const auto f = fit_a0(rs.sweeps[used[static_cast<std::size_t>(j)]], 0.02, a0_of_t.derivative(tc[j]));
          next[j] = f.a0;
          sa0[static_cast<std::size_t>(j)] = f.sigma_a0;
        } catch (const CalibrationQualityError&) {
          // keep the constant-offset value
        }
      }
      const double change = (next - a0).cwiseAbs().maxCoeff();
      a0 = next;
      a0_of_t = numerics::NaturalCubicSpline(tc, a0);
      if (change <= options.refine_tolerance) break;
    }
  }

  std::vector<CorrectedPoint> out;
  for (std::size_t u = 0; u < used.size(); ++u) {
    const auto& s = rs.sweeps[used[u]];
    double sig = sa0[u];
    if (n == 1) sig = std::hypot(sig, options.single_sweep_sigma);
    for (std::size_t k = 0; k < s.points.size(); ++k) {
      const auto& p = s.points[k];
      CorrectedPoint c;
      c.sweep = s.index;
      c.index = static_cast<int>(k);
      c.t = p.t;
      c.a = (n >= 2 ? a0_of_t(p.t) : a0[0]) - p.a_pz;
      c.sigma_a = std::hypot(sig, p.sigma_a_pz);
      c.omega0 = n >= 2 ? w0_of_t(p.t) : w0[0];
      c.omega = s.omega0_cal + p.delta_omega;
      c.sigma_omega = p.sigma_delta_omega;
      c.v_ex = p.v_ex;
      c.v_ac = p.v_ac;
      c.sigma_v_ex = p.sigma_v_ex;
      c.sigma_v_ac = p.sigma_v_ac;
      out.push_back(c);
    }
  }
  return out;
}

double ErrorBudget::total() const {
  return std::sqrt(radius * radius + mass * mass + voltages * voltages + frequency * frequency + omega0 * omega0 +
                   distance * distance);
}

std::vector<GradientSample> gradient_pipeline(const std::vector<CorrectedPoint>& points,
                                              const PipelineCalibration& cal) {
  const double pi = std::numbers::pi;
  std::vector<GradientSample> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    if (!(p.a > 0.0)) throw RangeError("gradient_pipeline: corrected separation is not positive");
    GradientSample g;
    g.sweep = p.sweep;
    g.a = p.a;
    g.sigma_a = p.sigma_a;
    const double total = cal.m * (p.omega0 * p.omega0 - p.omega * p.omega);
    const double es = electrostatic_gradient(p.a, 0.5 * (p.v_ex * p.v_ex + p.v_ac * p.v_ac), cal.R);
    g.value = total - es;
    const double sf = p.sigma_omega > 0.0 ? p.sigma_omega : cal.sigma_freq;
    auto& b = g.budget;
    b.frequency = 2.0 * cal.m * std::abs(p.omega) * sf;
    b.omega0 = 2.0 * cal.m * std::abs(p.omega0) * cal.sigma_omega0;
    b.voltages = pi * constants::epsilon0 * cal.R / (p.a * p.a) *
                 std::hypot(p.v_ex * p.sigma_v_ex, p.v_ac * p.sigma_v_ac);
    b.mass = std::abs(total) * cal.sigma_m / cal.m;
    b.radius = es * cal.sigma_R / cal.R;
    b.distance = cal.distance_exponent * std::abs(g.value) / p.a * p.sigma_a;
    g.sigma = std::sqrt(b.frequency * b.frequency + b.omega0 * b.omega0 + b.voltages * b.voltages);
    out.push_back(g);
  }
  return out;
}

ErrorBudget error_budget(const std::vector<GradientSample>& samples, double a_target) {
  ErrorBudget b;
  int n = 0;
  for (const auto& s : samples)
    if (std::abs(s.a / a_target - 1.0) <= 0.03) {
      b.radius += s.budget.radius;
      b.mass += s.budget.mass;
      b.voltages += s.budget.voltages;
      b.frequency += s.budget.frequency;
      b.omega0 += s.budget.omega0;
      b.distance += s.budget.distance;
      ++n;
    }
  if (n == 0) throw RangeError("error_budget: no samples within 3% of the target separation");
  for (double* v : {&b.radius, &b.mass, &b.voltages, &b.frequency, &b.omega0, &b.distance}) *v /= n;
  return b;
}

std::vector<CurvePoint> curve_points(const std::vector<GradientSample>& samples, int group_offset) {
  std::vector<CurvePoint> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({s.a, s.sigma_a, s.value, s.sigma, s.sweep + group_offset});
  return out;
}

namespace {

// Weighted mean of v over [lo, hi) with weights 1/s^2; zero-s entries win.
std::pair<double, double> weighted(const std::vector<CurvePoint>& pts, std::size_t lo, std::size_t hi, bool use_x,
                                   bool* exact) {
  int zeros = 0;
  double zsum = 0.0;
  for (std::size_t i = lo; i < hi; ++i) {
    const double s = use_x ? pts[i].sx : pts[i].sy;
    if (s == 0.0) {
      ++zeros;
      zsum += use_x ? pts[i].x : pts[i].y;
    }
  }
  if (zeros > 0) {
    *exact = true;
    return {zsum / zeros, 0.0};
  }
  double sw = 0.0, swv = 0.0;
  for (std::size_t i = lo; i < hi; ++i) {
    const double s = use_x ? pts[i].sx : pts[i].sy;
    const double w = 1.0 / (s * s);
    sw += w;
    swv += w * (use_x ? pts[i].x : pts[i].y);
  }
  return {swv / sw, 1.0 / std::sqrt(sw)};
}

}  // namespace

AveragedCurve weighted_running_mean(std::vector<CurvePoint> pts, int width) {
  if (width < 1) throw ValidationError("weighted_running_mean: width must be >= 1");
  if (pts.empty()) throw ValidationError("weighted_running_mean: no points");
  for (const auto& p : pts)
    if (!(p.sx >= 0.0 && p.sy >= 0.0) || !std::isfinite(p.x) || !std::isfinite(p.y))
      throw ValidationError("weighted_running_mean: invalid point");
  std::stable_sort(pts.begin(), pts.end(), [](const CurvePoint& a, const CurvePoint& b) { return a.x < b.x; });
  const std::size_t n = pts.size();
  const auto w = std::min<std::size_t>(static_cast<std::size_t>(width), n);
  AveragedCurve c;
  c.width = static_cast<int>(w);
  std::vector<std::array<double, 4>> rows;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t start = std::min(i >= w / 2 ? i - w / 2 : 0, n - w);
    bool ex = false, ey = false;
    const auto [x, sx] = weighted(pts, start, start + w, true, &ex);
    const auto [y, sy] = weighted(pts, start, start + w, false, &ey);
    if (ex || ey) ++c.exact_points;
    rows.push_back({x, y, sy, sx});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a[0] < b[0]; });
  for (const auto& r : rows) {
    c.a.push_back(r[0]);
    c.value.push_back(r[1]);
    c.sigma.push_back(r[2]);
    c.sigma_a.push_back(r[3]);
  }
  c.source = std::move(pts);
  return c;
}

namespace {

struct Interp {
  double y = 0.0, s = 0.0;
  bool inside = false;
};

Interp interpolate(const AveragedCurve& c, double x) {
  if (c.a.empty() || x < c.a.front() || x > c.a.back()) return {};
  const auto it = std::lower_bound(c.a.begin(), c.a.end(), x);
  const auto j = static_cast<std::size_t>(it - c.a.begin());
  if (c.a[j] == x) return {c.value[j], c.sigma[j], true};
  const double t = (x - c.a[j - 1]) / (c.a[j] - c.a[j - 1]);
  return {c.value[j - 1] + t * (c.value[j] - c.value[j - 1]), c.sigma[j - 1] + t * (c.sigma[j] - c.sigma[j - 1]),
          true};
}

// Standard error of the per-group window means of y / curve(x) - 1.
std::pair<double, int> group_scatter(const std::vector<CurvePoint>& pts, const AveragedCurve& curve, Window w) {
  std::map<int, std::pair<double, int>> groups;
  for (const auto& p : pts) {
    if (p.x < w.lo || p.x > w.hi) continue;
    const auto r = interpolate(curve, p.x);
    if (!r.inside || r.y == 0.0) continue;
    auto& g = groups[p.group];
    g.first += p.y / r.y - 1.0;
    g.second += 1;
  }
  std::vector<double> means;
  for (const auto& [id, g] : groups) means.push_back(g.first / g.second);
  if (means.size() < 2) return {std::numeric_limits<double>::quiet_NaN(), static_cast<int>(means.size())};
  const double sd = numerics::rms_about_mean(means) * std::sqrt(means.size() / (means.size() - 1.0));
  return {sd / std::sqrt(static_cast<double>(means.size())), static_cast<int>(means.size())};
}

}  // namespace

ReductionReport relative_reduction(const AveragedCurve& sample, const AveragedCurve& reference, Window window) {
  if (!(window.hi > window.lo)) throw ValidationError("relative_reduction: empty window");
  if (sample.a.empty() || reference.a.empty()) throw ValidationError("relative_reduction: empty curve");
  const double lo = std::max(sample.a.front(), reference.a.front());
  const double hi = std::min(sample.a.back(), reference.a.back());
  if (window.lo < lo || window.hi > hi) {
    std::ostringstream msg;
    msg << "relative_reduction: window [" << window.lo << ", " << window.hi << "] m outside the overlap [" << lo
        << ", " << hi << "] m";
    throw RangeError(msg.str());
  }
  ReductionReport r;
  r.window = window;
  std::vector<double> in_window, weights;
  for (std::size_t i = 0; i < sample.a.size(); ++i) {
    const auto ref = interpolate(reference, sample.a[i]);
    if (!ref.inside) continue;
    const double d = sample.value[i] / ref.y - 1.0;
    const double s = (1.0 + d) * std::hypot(sample.sigma[i] / sample.value[i], ref.s / ref.y);
    r.a.push_back(sample.a[i]);
    r.delta.push_back(d);
    r.sigma.push_back(s);
    if (sample.a[i] >= window.lo && sample.a[i] <= window.hi) {
      in_window.push_back(d);
      weights.push_back(s > 0.0 ? 1.0 / (s * s) : 0.0);
    }
  }
  if (in_window.empty()) throw RangeError("relative_reduction: no curve points inside the window");
  r.window_points = static_cast<int>(in_window.size());
  const bool exact = std::any_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; });
  double sw = 0.0, swd = 0.0;
  for (std::size_t i = 0; i < in_window.size(); ++i) {
    const double w = exact ? 1.0 : weights[i];
    sw += w;
    swd += w * in_window[i];
  }
  r.window_mean = swd / sw;

  // Points inside one sweep share calibration errors, so the window error comes
  // from the scatter between sweeps when the raw points are known.
  const auto [se_s, ns] = group_scatter(sample.source, reference, window);
  const auto [se_r, nr] = group_scatter(reference.source, reference, window);
  r.sample_groups = ns;
  r.reference_groups = nr;
  if (std::isfinite(se_s) && std::isfinite(se_r)) {
    r.window_sigma = std::hypot(se_s, se_r);
  } else {
    r.window_sigma = exact ? 0.0 : std::sqrt(static_cast<double>(sample.width) / sw);
  }
  r.histogram = numerics::freedman_diaconis_histogram(in_window);
  return r;
}

RunAnalysis analyze_run(std::vector<SweepRecord> sweeps, const PipelineCalibration& calibration,
                        const ScreeningRules& rules, const DriftOptions& drift) {
  RunAnalysis out;
  out.runset = screen_sweeps(make_runset(std::move(sweeps)), rules);
  out.points = interpolate_drift(out.runset, drift);
  out.samples = gradient_pipeline(out.points, calibration);
  return out;
}

AveragedCurve pooled_curve(const std::vector<RunAnalysis>& runs, int width) {
  std::vector<CurvePoint> pts;
  int offset = 0, accepted = 0;
  for (const auto& run : runs) {
    const auto p = curve_points(run.samples, offset);
    pts.insert(pts.end(), p.begin(), p.end());
    int max_index = 0;
    for (const auto& s : run.runset.sweeps) max_index = std::max(max_index, s.index);
    offset += max_index + 1;
    accepted += run.runset.accepted();
  }
  return weighted_running_mean(std::move(pts), width > 0 ? width : std::max(1, accepted));
}

}  // namespace casimir
