#include "casimir/instrument.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "casimir/constants.hpp"
#include "casimir/numerics/least_squares.hpp"
#include "casimir/numerics/random.hpp"
#include "casimir/numerics/roots.hpp"

namespace casimir {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr std::uint64_t kStreamSweep = 0x7377656570ULL;
constexpr std::uint64_t kStreamDrift = 0x6472696674ULL;
constexpr std::uint64_t kStreamPhase = 0x7068617365ULL;

double wrap(double x) { return std::remainder(x, 2.0 * kPi); }
}  // namespace

CantileverParams CantileverParams::make(double m, double omega0, double gamma1, double C, double n) {
  CantileverParams p;
  p.m = m;
  p.omega0 = omega0;
  p.k = m * omega0 * omega0;
  p.gamma1 = gamma1;
  p.gamma0_C = C;
  p.gamma0_n = n;
  p.validate();
  return p;
}

CantileverParams CantileverParams::defaults() {
  const double m = 1.871e-8;
  const double w0 = 2.0 * kPi * 609.07;
  const double R = kDefaultSphereRadius;
  return make(m, w0, m * w0 / 200.0, 6.0 * kPi * kAirViscosity * R * R, 1.0);
}

double CantileverParams::gamma0(double a) const { return gamma0_C * std::pow(a, -gamma0_n); }

double CantileverParams::dgamma0_da(double a) const { return -gamma0_n * gamma0_C * std::pow(a, -gamma0_n - 1.0); }

void CantileverParams::validate() const {
  if (!(m > 0.0 && k > 0.0 && omega0 > 0.0)) throw ValidationError("cantilever: m, k and omega0 must be > 0");
  if (std::abs(k - m * omega0 * omega0) > 1e-12 * k) throw ValidationError("cantilever: k differs from m omega0^2");
  if (!(gamma1 >= 0.0 && gamma0_C >= 0.0 && gamma0_n >= 0.0))
    throw ValidationError("cantilever: dampings must be >= 0");
}

double gradient_from_shift(double m, double omega0, double delta_omega) {
  const double w = omega0 + delta_omega;
  return m * (omega0 * omega0 - w * w);
}

double shift_from_gradient(double m, double omega0, double dFda) {
  const double k = m * omega0 * omega0;
  if (dFda >= k) {
    std::ostringstream msg;
    msg << "pull-in: gradient " << dFda << " N/m reaches the spring constant " << k << " N/m";
    throw PullInError(msg.str());
  }
  // sqrt(w0^2 - g/m) - w0 without cancellation for small g
  const double q = dFda / m;
  return -q / (std::sqrt(omega0 * omega0 - q) + omega0);
}

double electrostatic_gradient(double a, double v_sq, double R) {
  if (!(a > 0.0)) throw ValidationError("electrostatic_gradient: a must be > 0");
  return kPi * constants::epsilon0 * R * v_sq / (a * a);
}

Complex electrostatic_response(double a, double v_ex, double v_ac, double omega, const CantileverParams& p, double R,
                               std::optional<double> gamma) {
  if (!(a > 0.0)) throw ValidationError("electrostatic_response: a must be > 0");
  const double v_sq = v_ex * v_ex + v_ac * v_ac;
  const double g = gamma.value_or(p.gamma0(a) + p.gamma1);
  const double num = 4.0 * kPi * R * constants::epsilon0 * v_sq / (a * a);
  const double es = electrostatic_gradient(a, 0.5 * v_sq, R);
  return num / Complex(p.m * p.omega0 * p.omega0 - es - p.m * omega * omega, g * omega);
}

SourceAmplitudes ExcitationConfig::amplitudes() const {
  SourceAmplitudes s;
  s[source] = amplitude;
  return s;
}

void ExcitationConfig::validate() const {
  if (!std::isfinite(amplitude) || !(omega >= 0.0)) throw ValidationError("excitation: invalid amplitude or frequency");
  // small-signal bound: 1 nN for F, 1 nm for X0 and X1
  if (std::abs(amplitude) > 1e-9) throw ValidationError("excitation: amplitude outside the small-signal range");
}

LocalTerms LocalTerms::at(const CantileverParams& p, double a, double df) {
  if (!(a > 0.0)) throw ValidationError("local terms: a must be > 0");
  return {df, p.gamma0(a), p.dgamma0_da(a)};
}

namespace {

struct Parts {
  Complex N, D, dN, dD;
};

Parts parts(Source b, double w, const CantileverParams& p, const SourceAmplitudes& s, const LocalTerms& t) {
  const Complex I(0.0, 1.0);
  const double F = s.F, X0 = s.X0, X1 = s.X1;
  Parts r;
  r.N = F - t.df * (X0 - X1) - I * w * (t.gamma0 * (X1 - X0) + 3.0 * t.dgamma0 * X0 * X1 + I * w * p.m * X1);
  r.D = p.k - t.df + I * w * (t.gamma0 + p.gamma1 + 2.0 * t.dgamma0 * (X0 - X1)) - p.m * w * w;
  switch (b) {
    case Source::F:
      r.dN = 1.0;
      r.dD = 0.0;
      break;
    case Source::X0:
      r.dN = -t.df - I * w * (-t.gamma0 + 3.0 * t.dgamma0 * X1);
      r.dD = I * w * 2.0 * t.dgamma0;
      break;
    case Source::X1:
      r.dN = t.df - I * w * (t.gamma0 + 3.0 * t.dgamma0 * X0 + I * w * p.m);
      r.dD = -I * w * 2.0 * t.dgamma0;
      break;
  }
  return r;
}

}  // namespace

Complex eom_response(double omega, const CantileverParams& p, const SourceAmplitudes& s, const LocalTerms& t) {
  const auto r = parts(Source::F, omega, p, s, t);
  return r.N / r.D;
}

Complex transfer_function(Source b, double omega, const CantileverParams& p, const SourceAmplitudes& s,
                          const LocalTerms& t) {
  SourceAmplitudes s0 = s;
  s0[b] = 0.0;
  const auto r = parts(b, omega, p, s0, t);
  return (r.dN * r.D - r.N * r.dD) / (r.D * r.D);
}

ResonancePhase resonance_and_phase(Source b, const CantileverParams& p, const SourceAmplitudes& s, const LocalTerms& t,
                                   std::optional<std::pair<double, double>> bracket) {
  p.validate();
  if (!(p.k > t.df)) throw ValidationError("resonance_and_phase: requires k > df");
  SourceAmplitudes s0 = s;
  s0[b] = 0.0;
  const auto [lo, hi] = bracket.value_or(std::make_pair(0.0, 2.0 * std::sqrt((p.k + std::abs(t.df)) / p.m)));
  auto re_d = [&](double w) { return parts(b, w, p, s0, t).D.real(); };
  ResonancePhase out;
  try {
    const auto root = numerics::find_root(re_d, lo, hi);
    out.omega_res = root.x;
    out.iterations = root.iterations;
  } catch (const ConvergenceError&) {
    throw BracketError("resonance_and_phase: Re D has no sign change in the bracket");
  }
  out.phi_res = std::arg(transfer_function(b, out.omega_res, p, s, t));

  // Literal Re Y_B = 0 root near the resonance, for comparison.
  auto re_y = [&](double w) { return transfer_function(b, w, p, s, t).real(); };
  const int scan = 400;
  double best = std::numeric_limits<double>::infinity();
  double prev_w = 0.5 * out.omega_res, prev_f = re_y(prev_w);
  for (int i = 1; i <= scan; ++i) {
    const double w = out.omega_res * (0.5 + static_cast<double>(i) / scan);
    const double f = re_y(w);
    if (prev_f * f < 0.0) {
      const double r = numerics::find_root(re_y, prev_w, w).x;
      if (std::abs(r - out.omega_res) < std::abs(best - out.omega_res)) best = r;
    }
    prev_w = w;
    prev_f = f;
  }
  if (std::isfinite(best)) out.re_y_root = best;
  return out;
}

double resonance_closed_form(const CantileverParams& p, const LocalTerms& t) {
  if (!(p.k > t.df)) throw ValidationError("resonance_closed_form: requires k > df");
  return std::sqrt((p.k - t.df) / p.m);
}

double phase_closed_form(Source b, const CantileverParams& p, const SourceAmplitudes& s, const LocalTerms& t) {
  const double w = resonance_closed_form(p, t);
  const double g = t.gamma0 + p.gamma1, dg = t.dgamma0, kd = p.k - t.df;
  switch (b) {
    case Source::F:
      return -kPi / 2.0;
    case Source::X0: {
      const double num = t.df * g + 2.0 * dg * (s.F + kd * s.X1);
      const double den = t.gamma0 * g - 3.0 * dg * g * s.X1 + 6.0 * dg * dg * s.X1 * s.X1;
      return std::atan2(num, w * den);
    }
    case Source::X1: {
      const double num = p.k * g + 2.0 * dg * (s.F + kd * s.X0);
      const double den = t.gamma0 * g + 3.0 * dg * g * s.X0 + 6.0 * dg * dg * s.X0 * s.X0;
      return std::atan2(-num, -w * den);
    }
  }
  return 0.0;
}

double phase_single_source_limit(Source b, const CantileverParams& p, const LocalTerms& t) {
  const double root = std::sqrt(p.m * (p.k - t.df));
  switch (b) {
    case Source::F:
      return -kPi / 2.0;
    case Source::X0:
      return std::atan(t.df * p.m / (t.gamma0 * root));
    case Source::X1:
      return std::atan(p.k * p.m / (t.gamma0 * root));
  }
  return 0.0;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> unwrap(std::vector<double> phase) {
  for (std::size_t i = 1; i < phase.size(); ++i) phase[i] = phase[i - 1] + wrap(phase[i] - phase[i - 1]);
  return phase;
}

}  // namespace

FrequencySweep calibration_sweep(const std::vector<double>& omega, const CantileverParams& p,
                                 const CalibrationSetup& setup, double phi_off, double gamma, double phase_noise,
                                 std::uint64_t seed) {
  FrequencySweep out;
  out.omega = omega;
  auto rng = numerics::keyed_engine(seed, kStreamPhase, 0);
  std::normal_distribution<double> n01;
  std::vector<double> ph;
  for (double w : omega) {
    const Complex y = electrostatic_response(setup.a, setup.v_ex, setup.v_ac, w, p, setup.R, gamma);
    out.response.push_back(y * std::polar(1.0, phi_off));
    ph.push_back(wrap(std::arg(y) + phi_off + phase_noise * n01(rng)));
  }
  out.phase = unwrap(ph);
  return out;
}

Omega0Fit calibrate_omega0(const FrequencySweep& sweep, const CantileverParams& initial, const CalibrationSetup& setup,
                           std::optional<double> gamma_initial) {
  const std::size_t n = sweep.omega.size();
  if (n < 4 || sweep.phase.size() != n) throw ValidationError("calibrate_omega0: need >= 4 matching sweep points");
  const auto [pmin, pmax] = std::minmax_element(sweep.phase.begin(), sweep.phase.end());
  if (*pmax - *pmin < kPi / 2.0)
    throw BracketError("calibrate_omega0: phase varies by less than pi/2, resonance not inside the sweep");
  const double w_init = initial.omega0;
  const double g_init = gamma_initial.value_or(initial.gamma0(setup.a) + initial.gamma1);

  auto model = [&](double w0, double g, double w) {
    CantileverParams q = initial;
    q.omega0 = w0;
    q.k = q.m * w0 * w0;
    return std::arg(electrostatic_response(setup.a, setup.v_ex, setup.v_ac, w, q, setup.R, g));
  };
  double off0 = 0.0;
  {
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = sweep.phase[i] - model(w_init, g_init, sweep.omega[i]);
      sx += std::cos(d);
      sy += std::sin(d);
    }
    off0 = std::atan2(sy, sx);
  }
  // x = [relative omega0 offset, phi_off, ln(gamma / g_init)]
  const numerics::ResidualFunction fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd*) {
    r.resize(static_cast<Eigen::Index>(n));
    const double w0 = w_init * (1.0 + x[0]), g = g_init * std::exp(x[2]);
    for (std::size_t i = 0; i < n; ++i)
      r[static_cast<Eigen::Index>(i)] = wrap(model(w0, g, sweep.omega[i]) + x[1] - sweep.phase[i]);
  };
  numerics::LevenbergMarquardtOptions opt;
  opt.numeric_jacobian = true;
  opt.fd_step = 1e-8;
  opt.max_iterations = 300;
  const auto res = numerics::levenberg_marquardt(fn, Eigen::Vector3d(0.0, off0, 0.0), opt);
  Omega0Fit out;
  out.omega0 = w_init * (1.0 + res.x[0]);
  out.phi_off = wrap(res.x[1]);
  out.gamma = g_init * std::exp(res.x[2]);
  out.residual_rms = std::sqrt(2.0 * res.cost / static_cast<double>(n));
  out.converged = res.converged;
  const double es = electrostatic_gradient(setup.a, 0.5 * (setup.v_ex * setup.v_ex + setup.v_ac * setup.v_ac), setup.R);
  const double w_res = std::sqrt(std::max(0.0, out.omega0 * out.omega0 - es / initial.m));
  const auto [wmin, wmax] = std::minmax_element(sweep.omega.begin(), sweep.omega.end());
  if (w_res < *wmin || w_res > *wmax) throw BracketError("calibrate_omega0: fitted resonance outside the sweep");
  return out;
}

MassFit calibrate_mass(const std::vector<std::pair<double, double>>& parabola, double a, double omega0, double R) {
  std::vector<double> vs;
  for (const auto& [v, dw] : parabola) vs.push_back(v);
  std::sort(vs.begin(), vs.end());
  vs.erase(std::unique(vs.begin(), vs.end()), vs.end());
  if (vs.size() < 5) throw ValidationError("calibrate_mass: need >= 5 distinct V_DC values");
  const auto n = static_cast<Eigen::Index>(parabola.size());

  // Seed from the small-shift parabola dw ~ c0 + c1 V + c2 V^2.
  Eigen::MatrixXd A(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = parabola[static_cast<std::size_t>(i)].first;
    A(i, 0) = 1.0;
    A(i, 1) = v;
    A(i, 2) = v * v;
    y[i] = parabola[static_cast<std::size_t>(i)].second;
  }
  const auto lin = numerics::linear_least_squares(A, y);
  const double c0 = lin.coefficients[0], c1 = lin.coefficients[1], c2 = lin.coefficients[2];
  const double c2_sigma = std::sqrt(std::max(0.0, lin.covariance(2, 2)));
  if (!(c2 < 0.0) || std::abs(c2) <= 3.0 * c2_sigma)
    throw ConvergenceError("calibrate_mass: data show no parabolic frequency shift");
  const double geom = kPi * constants::epsilon0 * R / (a * a);
  const double m0 = -geom / (2.0 * omega0 * c2);
  const double v00 = -c1 / (2.0 * c2);
  const double off0 = c0 - c2 * v00 * v00;

  const double wscale = std::max(y.cwiseAbs().maxCoeff(), 1e-300);
  const numerics::ResidualFunction fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd*) {
    r.resize(n);
    const double m = m0 * std::exp(x[0]);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double dv = parabola[static_cast<std::size_t>(i)].first - x[1];
      const double g = geom * dv * dv;
      const double q = g / m;
      const double model = q < omega0 * omega0 ? -q / (std::sqrt(omega0 * omega0 - q) + omega0) : -omega0;
      r[i] = (model + x[2] * wscale - y[i]) / wscale;
    }
  };
  numerics::LevenbergMarquardtOptions opt;
  opt.numeric_jacobian = true;
  const auto res = numerics::levenberg_marquardt(fn, Eigen::Vector3d(0.0, v00, off0 / wscale), opt);
  MassFit out;
  out.m = m0 * std::exp(res.x[0]);
  out.v0 = res.x[1];
  out.omega_off = res.x[2] * wscale;
  out.converged = res.converged;
  if (n > 3) {
    const auto cov = numerics::covariance(res);
    out.sigma_m = out.m * std::sqrt(std::max(0.0, cov(0, 0)));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> plan_separations(const SweepPlan& plan) {
  if (plan.points < 2 || !(plan.a_start > plan.a_end && plan.a_end > 0.0))
    throw ValidationError("sweep plan: need >= 2 points and a_start > a_end > 0");
  std::vector<double> a(static_cast<std::size_t>(plan.points));
  for (int i = 0; i < plan.points; ++i)
    a[static_cast<std::size_t>(i)] =
        plan.a_start * std::pow(plan.a_end / plan.a_start, static_cast<double>(i) / (plan.points - 1));
  return a;
}

SimulatedRun simulate_run(const std::function<double(double)>& law, const CantileverParams& p, const SweepPlan& plan,
                          const NoiseModel& noise, std::uint64_t seed, double R) {
  p.validate();
  if (plan.sweeps < 1) throw ValidationError("sweep plan: sweeps must be >= 1");
  const auto seps = plan_separations(plan);
  const double t_sweep = plan.run_duration / plan.sweeps;
  const double dt = t_sweep / (plan.points + 1);
  const int centre = plan.points == 34 ? 15 : (plan.points - 1) / 2;  // point number 16 of 34

  // omega0 random walk, bounded to +-span/2, one value per calibration
  std::vector<double> w0(static_cast<std::size_t>(plan.sweeps + 1), p.omega0);
  std::vector<double> walk(static_cast<std::size_t>(plan.sweeps + 1), 0.0);
  {
    auto rng = numerics::keyed_engine(seed, kStreamDrift, 0);
    std::normal_distribution<double> n01;
    const double half = 0.5 * noise.omega0_drift_span;
    const double step = noise.omega0_drift_span / (2.0 * std::sqrt(static_cast<double>(plan.sweeps)));
    double x = 0.0, y = 0.0;
    for (int j = 0; j <= plan.sweeps; ++j) {
      w0[static_cast<std::size_t>(j)] = p.omega0 + x;
      walk[static_cast<std::size_t>(j)] = y;
      x = std::clamp(x + step * n01(rng), -half, half);
      y += noise.a0_walk * n01(rng);
    }
  }
  auto omega0_at = [&](double t) {
    const double u = std::clamp(t / t_sweep, 0.0, static_cast<double>(plan.sweeps));
    const auto j = std::min(static_cast<std::size_t>(u), static_cast<std::size_t>(plan.sweeps - 1));
    const double f = u - static_cast<double>(j);
    return (1.0 - f) * w0[j] + f * w0[j + 1];
  };
  auto a0_at = [&](double t, int sweep) {
    const double u = std::clamp(t / t_sweep, 0.0, static_cast<double>(plan.sweeps));
    const auto j = std::min(static_cast<std::size_t>(u), static_cast<std::size_t>(plan.sweeps - 1));
    const double f = u - static_cast<double>(j);
    double a0 = plan.a0 + noise.a0_drift_per_sweep * u + (1.0 - f) * walk[j] + f * walk[j + 1];
    for (const auto& [s, step] : noise.a0_jumps)
      if (sweep >= s) a0 += step;
    return a0;
  };

  SimulatedRun out;
  for (int j = 0; j < plan.sweeps; ++j) {
    auto rng = numerics::keyed_engine(seed, kStreamSweep, static_cast<std::uint64_t>(j));
    std::normal_distribution<double> n01;
    SweepRecord rec;
    rec.index = j;
    rec.t_cal = j * t_sweep;
    out.omega0_true.push_back(omega0_at(rec.t_cal));
    rec.omega0_cal = out.omega0_true.back() + noise.sigma_omega0 * n01(rng);
    rec.a0_true = a0_at(rec.t_cal + (centre + 1) * dt, j);
    for (int i = 0; i < plan.points; ++i) {
      SweepPoint pt;
      pt.t = rec.t_cal + (i + 1) * dt;
      const double a_pz = plan.a0 - seps[static_cast<std::size_t>(i)];
      const double a = a0_at(pt.t, j) - a_pz;
      const double v = plan.v_ref * a / plan.a_ref;
      const double es = electrostatic_gradient(a, v * v, R);  // mean square of two equal channels
      const double w_free = omega0_at(pt.t);
      double shift = 0.0;
      try {
        shift = shift_from_gradient(p.m, w_free, law(a) + es);
      } catch (const PullInError&) {
        rec.truncated = true;
        break;
      }
      pt.a_pz = a_pz + noise.sigma_a_pz * n01(rng);
      pt.v_ex = v * (1.0 + noise.sigma_v_rel * n01(rng));
      pt.v_ac = v * (1.0 + noise.sigma_v_rel * n01(rng));
      pt.delta_omega = w_free + shift - rec.omega0_cal + noise.sigma_freq * n01(rng);
      pt.sigma_delta_omega = noise.sigma_freq;
      pt.sigma_v_ex = noise.sigma_v_rel * std::abs(v);
      pt.sigma_v_ac = noise.sigma_v_rel * std::abs(v);
      pt.sigma_a_pz = noise.sigma_a_pz;
      rec.points.push_back(pt);
    }
    out.sweeps.push_back(std::move(rec));
  }
  return out;
}

}  // namespace casimir
