#include "casimir/lifshitz.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "casimir/constants.hpp"
#include "casimir/numerics/quadrature.hpp"
#include "casimir/numerics/stats.hpp"

namespace casimir {

namespace k = constants;

DielectricSource::DielectricSource(std::string name, Function eps, StaticLimit limit, double static_eps)
    : name_(std::move(name)), eps_(std::move(eps)), limit_(limit), static_eps_(static_eps) {}

namespace {
StaticLimit model_limit(const DrudeLorentzModel& m) {
  return m.is_metal() ? StaticLimit::DrudeMetal : StaticLimit::Dielectric;
}
double model_static_eps(const DrudeLorentzModel& m) {
  return m.is_metal() ? std::numeric_limits<double>::infinity() : eval_imag_axis_causal(m, 0.0);
}
}  // namespace

DielectricSource DielectricSource::model_direct(const DrudeLorentzModel& model, std::string name) {
  model.validate();
  return {std::move(name), [model](double xi) { return eval_imag_axis(model, xi); }, model_limit(model),
          model.is_metal() ? std::numeric_limits<double>::infinity() : eval_imag_axis(model, 0.0)};
}

DielectricSource DielectricSource::model_causal(const DrudeLorentzModel& model, std::string name) {
  model.validate();
  return {std::move(name), [model](double xi) { return eval_imag_axis_causal(model, xi); }, model_limit(model),
          model_static_eps(model)};
}

DielectricSource DielectricSource::model_kk(const DrudeLorentzModel& model, std::string name, int points_per_decade) {
  model.validate();
  constexpr double lo = 1e8, hi = 1e21;
  auto table = std::make_shared<const TabulatedSpectrum>(tabulate_model(model, lo, hi, points_per_decade));
  table->validate();
  // Outside the transform window the closed form is used; it is the same function.
  auto fn = [table, model](double xi) {
    if (xi < lo / 10.0 || xi > hi * 10.0) return eval_imag_axis_causal(model, xi);
    return kk_transform(*table, xi);
  };
  return {std::move(name), fn, model_limit(model), model_static_eps(model)};
}

DielectricSource DielectricSource::spectrum(TabulatedSpectrum s, std::string name, std::optional<StaticLimit> limit) {
  s.validate();
  if (s.empty()) throw ValidationError("spectrum source: empty spectrum");
  auto table = std::make_shared<const TabulatedSpectrum>(std::move(s));
  const auto& first = table->points.front();
  const StaticLimit lim = limit ? *limit : (first.eps_real < 1.0 ? StaticLimit::DrudeMetal : StaticLimit::Dielectric);
  double static_eps = 1.0;
  if (lim == StaticLimit::DrudeMetal || lim == StaticLimit::PerfectConductor)
    static_eps = std::numeric_limits<double>::infinity();
  else if (lim == StaticLimit::Dielectric)
    static_eps = kk_transform(*table, table->omega_min() / 10.0);
  return {std::move(name), [table](double xi) { return kk_transform(*table, xi); }, lim, static_eps};
}

DielectricSource DielectricSource::perfect_conductor() {
  return {"perfect_conductor", [](double) { return std::numeric_limits<double>::infinity(); },
          StaticLimit::PerfectConductor, std::numeric_limits<double>::infinity()};
}

DielectricSource DielectricSource::vacuum() {
  return {"vacuum", [](double) { return 1.0; }, StaticLimit::Vacuum, 1.0};
}

DielectricSource DielectricSource::constant(double eps) {
  if (!(eps >= 1.0)) throw ValidationError("constant source: eps must be >= 1");
  if (eps == 1.0) return vacuum();
  return {"constant", [eps](double) { return eps; }, StaticLimit::Dielectric, eps};
}

StaticReflection DielectricSource::static_reflection() const {
  switch (limit_) {
    case StaticLimit::DrudeMetal:
      return {1.0, 0.0};
    case StaticLimit::PerfectConductor:
      return {1.0, -1.0};
    case StaticLimit::Dielectric:
      return {(static_eps_ - 1.0) / (static_eps_ + 1.0), 0.0};
    case StaticLimit::Vacuum:
      break;
  }
  return {0.0, 0.0};
}

void LifshitzConfig::validate() const {
  if (!(temperature > 0.0)) throw ValidationError("config: temperature must be > 0");
  if (!(sphere_radius > 0.0)) throw ValidationError("config: sphere_radius must be > 0");
  auto tol_ok = [](double t) { return t > 0.0 && t <= 1e-2; };
  if (!tol_ok(matsubara_tolerance)) throw ValidationError("config: matsubara_tolerance outside (0, 1e-2]");
  if (!tol_ok(quadrature_tolerance)) throw ValidationError("config: quadrature_tolerance outside (0, 1e-2]");
  if (max_terms < 10) throw ValidationError("config: max_terms must be >= 10");
}

double MatsubaraGrid::frequency(int n, double temperature) {
  return 2.0 * k::pi * k::k_B * temperature * n / k::hbar;
}

MatsubaraGrid MatsubaraGrid::build(double temperature, int count) {
  MatsubaraGrid g;
  g.temperature = temperature;
  g.xi.resize(static_cast<std::size_t>(std::max(count, 0)));
  for (int n = 0; n < count; ++n) g.xi[n] = frequency(n, temperature);
  return g;
}

Reflection layered_reflection(double film_eps, double substrate_eps, double d, double p, double xi) {
  if (!(d >= 0.0)) throw ValidationError("layered_reflection: thickness must be >= 0");
  const double r12_tm = fresnel_tm(p, film_eps, 1.0);
  const double r12_te = fresnel_te(p, film_eps, 1.0);
  const double r23_tm = fresnel_tm(p, substrate_eps, film_eps);
  const double r23_te = fresnel_te(p, substrate_eps, film_eps);
  const double k2 = std::isinf(film_eps) ? std::numeric_limits<double>::infinity() : kappa(p, film_eps);
  const double e = d == 0.0 ? 1.0 : std::exp(-2.0 * k2 * d * xi / k::c);
  return {(r12_tm + r23_tm * e) / (1.0 + r12_tm * r23_tm * e), (r12_te + r23_te * e) / (1.0 + r12_te * r23_te * e)};
}

double polylog3(double x) {
  if (!(std::abs(x) <= 1.0)) throw ValidationError("polylog3: |x| must be <= 1");
  if (x == 1.0) return k::zeta3;
  if (x == 0.0) return 0.0;
  double sum = 0.0, power = 1.0;
  for (int j = 1; j < 2000000; ++j) {
    power *= x;
    const double term = power / (static_cast<double>(j) * j * j);
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return sum;
}

EpsilonCache::EpsilonCache(const MaterialAssignment& materials, double temperature)
    : materials_(&materials), temperature_(temperature) {}

const std::array<double, 3>& EpsilonCache::at(int n) {
  while (static_cast<int>(values_.size()) <= n) {
    const int m = static_cast<int>(values_.size());
    std::array<double, 3> v{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                            std::numeric_limits<double>::quiet_NaN()};
    if (m > 0) {
      const double x = xi(m);
      auto check = [x](const DielectricSource& s, const char* body) {
        const double e = s(x);
        if (!(e >= 1.0)) {
          std::ostringstream msg;
          msg << "eps(i xi) = " << e << " <= 1 for " << body << " '" << s.name() << "' at xi = " << x << " s^-1";
          throw ValidationError(msg.str());
        }
        return e;
      };
      v[0] = check(materials_->plate, "plate");
      v[1] = check(materials_->sphere, "sphere");
      if (materials_->plate_film) v[2] = check(materials_->plate_film->film, "film");
    }
    values_.push_back(v);
  }
  return values_[static_cast<std::size_t>(n)];
}

namespace {

struct TermResult {
  double value = 0.0;
  double error = 0.0;
};

// Int_x^inf y^2 sum_pol rr e^-y/(1 - rr e^-y) dy with p = y/x and the
// reflection product evaluated at eps(i xi) for xi = c x / (2a).
template <class PlateReflection>
TermResult matsubara_integral(double x, double eps_sphere, PlateReflection&& plate, double tol) {
  auto integrand = [&](double t) {
    const double y = x + t;
    const double p = y / x;
    const Reflection rp = plate(p);
    const double rs_tm = fresnel_tm(p, eps_sphere, 1.0);
    const double rs_te = fresnel_te(p, eps_sphere, 1.0);
    const double e = std::exp(-y);
    const double a_tm = rp.tm * rs_tm * e;
    const double a_te = rp.te * rs_te * e;
    return y * y * (a_tm / (1.0 - a_tm) + a_te / (1.0 - a_te));
  };
  // Past t = 45 the integrand is below 1e-12 of its peak for any x.
  const auto r = numerics::integrate(integrand, 0.0, 45.0, tol, 0.0, 2000);
  return {r.value, r.error};
}

void check_range(double a) {
  if (!(a >= kMinSeparation * (1.0 - 1e-12) && a <= kMaxSeparation * (1.0 + 1e-12))) {
    std::ostringstream msg;
    msg << "separation " << a << " m outside the validated range [1e-8, 1e-5] m";
    throw ValidationError(msg.str());
  }
}

Reflection bulk_reflection(double p, double eps) { return {fresnel_tm(p, eps, 1.0), fresnel_te(p, eps, 1.0)}; }

// n = 0 term (unweighted), in units of R k_B T / (4 a^3).
double zero_term_integral(double a, const MaterialAssignment& m, double tol) {
  const auto sphere = m.sphere.static_reflection();
  if (!m.plate_film) {
    const auto plate = m.plate.static_reflection();
    return 2.0 * (polylog3(plate.tm * sphere.tm) + polylog3(plate.te * sphere.te));
  }
  // Film on substrate: the phase factor exp(-2 q d) keeps a q dependence.
  const auto& film = m.plate_film->film;
  const double d = m.plate_film->thickness;
  const auto r12 = film.static_reflection();
  double r23_tm = 0.0, r23_te = 0.0;
  const double ef = film.static_epsilon();
  switch (m.plate.static_limit()) {
    case StaticLimit::DrudeMetal:
      r23_tm = 1.0;
      break;
    case StaticLimit::PerfectConductor:
      r23_tm = 1.0;
      r23_te = -1.0;
      break;
    case StaticLimit::Dielectric: {
      const double es = m.plate.static_epsilon();
      r23_tm = std::isinf(ef) ? -1.0 : (es - ef) / (es + ef);
      break;
    }
    case StaticLimit::Vacuum:
      r23_tm = std::isinf(ef) ? -1.0 : (1.0 - ef) / (1.0 + ef);
      break;
  }
  auto integrand = [&](double y) {
    const double ph = std::exp(-y * d / a);
    const double p_tm = (r12.tm + r23_tm * ph) / (1.0 + r12.tm * r23_tm * ph);
    const double p_te = (r12.te + r23_te * ph) / (1.0 + r12.te * r23_te * ph);
    const double e = std::exp(-y);
    const double a_tm = p_tm * sphere.tm * e;
    const double a_te = p_te * sphere.te * e;
    // y^2 a/(1-a) written to stay finite when a -> 1 at y -> 0
    auto part = [&](double aa, double r) {
      if (r == 0.0) return 0.0;
      return y * y * aa / (1.0 - aa);
    };
    return part(a_tm, p_tm * sphere.tm) + part(a_te, p_te * sphere.te);
  };
  return numerics::integrate(integrand, 0.0, 60.0, tol, 0.0, 2000).value;
}

GradientValue zero_temperature_gradient(double a, const MaterialAssignment& m, const LifshitzConfig& cfg) {
  const double tol = cfg.quadrature_tolerance;
  int outer_evals = 0;
  double inner_error = 0.0;
  auto outer = [&](double x) {
    ++outer_evals;
    if (x <= 0.0) return 0.0;
    const double xi = k::c * x / (2.0 * a);
    const double es = m.sphere(xi);
    const double ep = m.plate(xi);
    TermResult r;
    if (m.plate_film) {
      const double ef = m.plate_film->film(xi);
      const double d = m.plate_film->thickness;
      r = matsubara_integral(x, es, [&](double p) { return layered_reflection(ef, ep, d, p, xi); }, tol * 0.1);
    } else {
      r = matsubara_integral(x, es, [&](double p) { return bulk_reflection(p, ep); }, tol * 0.1);
    }
    inner_error += r.error;
    return r.value;
  };
  const auto res = numerics::integrate(outer, 0.0, 60.0, tol, 0.0, 2000);
  GradientValue out;
  const double pref = k::hbar * k::c / (16.0 * k::pi * a * a * a * a);
  out.value = pref * res.value * cfg.sphere_radius;
  out.rel_err = (res.error + inner_error / std::max(outer_evals, 1)) / std::max(std::abs(res.value), 1e-300);
  out.terms = outer_evals;
  return out;
}

}  // namespace

double zero_frequency_term(double a, const MaterialAssignment& materials, const LifshitzConfig& config) {
  config.validate();
  check_range(a);
  const double pref = k::k_B * config.temperature / (4.0 * a * a * a);
  return pref * zero_term_integral(a, materials, config.quadrature_tolerance) * config.sphere_radius;
}

GradientValue gradient_pfa(double a, const MaterialAssignment& materials, const LifshitzConfig& config) {
  EpsilonCache cache(materials, config.temperature);
  return gradient_pfa(a, materials, config, cache);
}

GradientValue gradient_pfa(double a, const MaterialAssignment& m, const LifshitzConfig& cfg, EpsilonCache& cache) {
  cfg.validate();
  check_range(a);
  if (cfg.zero_temperature) return zero_temperature_gradient(a, m, cfg);

  const double tol = cfg.quadrature_tolerance;
  std::vector<double> terms;
  double quad_error = 0.0;
  if (cfg.include_zero_term) terms.push_back(0.5 * zero_term_integral(a, m, tol));

  const double x1 = 2.0 * a * cache.xi(1) / k::c;
  double total = 0.0, tail = 0.0;
  bool done = false;
  int n = 1;
  for (; n <= cfg.max_terms; ++n) {
    const auto& eps = cache.at(n);
    const double x = x1 * n;
    const double xi = cache.xi(n);
    TermResult r;
    if (m.plate_film) {
      const double d = m.plate_film->thickness;
      r = matsubara_integral(x, eps[1], [&](double p) { return layered_reflection(eps[2], eps[0], d, p, xi); }, tol);
    } else {
      r = matsubara_integral(x, eps[1], [&](double p) { return bulk_reflection(p, eps[0]); }, tol);
    }
    terms.push_back(r.value);
    quad_error += r.error;
    if (n >= 10) {
      double last = 0.0;
      for (std::size_t j = terms.size() - 10; j < terms.size(); ++j) last += std::abs(terms[j]);
      total = numerics::pairwise_sum(terms);
      if (last == 0.0 || last < cfg.matsubara_tolerance * std::abs(total)) {
        // geometric tail from the ratio of the last two terms
        const double t1 = terms[terms.size() - 1], t0 = terms[terms.size() - 2];
        const double ratio = t0 != 0.0 ? std::abs(t1 / t0) : 0.0;
        tail = ratio < 1.0 ? std::abs(t1) * ratio / (1.0 - ratio) : last;
        done = true;
        break;
      }
    }
  }
  total = numerics::pairwise_sum(terms);
  const double pref = k::k_B * cfg.temperature / (4.0 * a * a * a);
  if (!done) {
    const double last = std::abs(terms.back());
    std::ostringstream msg;
    msg << "Matsubara sum not converged after " << cfg.max_terms << " terms at a = " << a << " m";
    throw MatsubaraConvergenceError(msg.str(), pref * total * cfg.sphere_radius,
                                    pref * last * cfg.max_terms * cfg.sphere_radius);
  }
  GradientValue out;
  out.value = pref * total * cfg.sphere_radius;
  out.rel_err = total != 0.0 ? (tail + quad_error) / std::abs(total) : 0.0;
  out.terms = n + 1;
  return out;
}

std::vector<GradientPoint> gradient_curve(const std::vector<double>& a_grid, const MaterialAssignment& materials,
                                          const LifshitzConfig& config) {
  EpsilonCache cache(materials, config.temperature);
  std::vector<GradientPoint> out;
  out.reserve(a_grid.size());
  for (double a : a_grid) {
    const auto g = gradient_pfa(a, materials, config, cache);
    out.push_back({a, g.value, g.rel_err});
  }
  return out;
}

double window_mean(const std::vector<double>& x, const std::vector<double>& y, Window w, int* count) {
  if (x.size() != y.size()) throw ValidationError("window_mean: size mismatch");
  std::vector<std::size_t> idx;
  const double slack = 1e-12 * std::max(std::abs(w.lo), std::abs(w.hi));
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] >= w.lo - slack && x[i] <= w.hi + slack) idx.push_back(i);
  if (count) *count = static_cast<int>(idx.size());
  if (idx.empty()) throw ValidationError("window_mean: no grid points inside the window");
  if (idx.size() == 1) return y[idx[0]];
  std::vector<double> num, den;
  for (std::size_t k2 = 0; k2 < idx.size(); ++k2) {
    const double left = k2 > 0 ? x[idx[k2]] - x[idx[k2 - 1]] : 0.0;
    const double right = k2 + 1 < idx.size() ? x[idx[k2 + 1]] - x[idx[k2]] : 0.0;
    const double wt = 0.5 * (std::abs(left) + std::abs(right));
    num.push_back(wt * y[idx[k2]]);
    den.push_back(wt);
  }
  return numerics::pairwise_sum(num) / numerics::pairwise_sum(den);
}

ReductionCurve reduction_curve(const std::vector<double>& a_grid, const MaterialAssignment& materials_a,
                               const MaterialAssignment& materials_b, const LifshitzConfig& config, Window window) {
  const auto ga = gradient_curve(a_grid, materials_a, config);
  const auto gb = gradient_curve(a_grid, materials_b, config);
  ReductionCurve out;
  out.window = window;
  for (std::size_t i = 0; i < a_grid.size(); ++i) {
    out.a.push_back(a_grid[i]);
    out.grad_a.push_back(ga[i].value);
    out.grad_b.push_back(gb[i].value);
    out.delta.push_back(gb[i].value / ga[i].value - 1.0);
  }
  out.window_mean = window_mean(out.a, out.delta, window, &out.window_points);
  return out;
}

}  // namespace casimir
