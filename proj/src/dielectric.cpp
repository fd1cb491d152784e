#include "casimir/dielectric.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "casimir/numerics/least_squares.hpp"
#include "casimir/numerics/quadrature.hpp"
#include "casimir/numerics/random.hpp"

namespace casimir {

void DrudeLorentzModel::validate() const {
  if (!(omega_p >= 0.0) || !std::isfinite(omega_p)) throw ValidationError("model: omega_p must be finite and >= 0");
  if (omega_p > 0.0 && !(tau_D > 0.0)) throw ValidationError("model: tau_D must be > 0");
  for (std::size_t j = 0; j < oscillators.size(); ++j) {
    const auto& o = oscillators[j];
    if (!(o.omega > 0.0)) throw ValidationError("model: oscillator " + std::to_string(j + 1) + " has omega_j <= 0");
    if (!std::isfinite(o.strength) || !std::isfinite(o.gamma))
      throw ValidationError("model: oscillator " + std::to_string(j + 1) + " has non-finite parameters");
  }
}

std::string_view to_string(Provenance p) { return p == Provenance::Measured ? "measured" : "literature"; }

Provenance provenance_from_string(std::string_view s) {
  if (s == "measured") return Provenance::Measured;
  if (s == "literature") return Provenance::Literature;
  throw ValidationError("unknown provenance tag '" + std::string(s) + "'");
}

void TabulatedSpectrum::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!(p.omega > 0.0) || !std::isfinite(p.eps_real) || !std::isfinite(p.eps_imag))
      throw ValidationError("spectrum: invalid point " + std::to_string(i));
    if (i > 0 && !(p.omega > points[i - 1].omega))
      throw ValidationError("spectrum: omega not strictly increasing at point " + std::to_string(i));
    if (p.provenance == Provenance::Measured && p.eps_imag < 0.0)
      throw ValidationError("spectrum: negative eps_imag on measured point " + std::to_string(i));
  }
}

double eval_imag_axis(const DrudeLorentzModel& model, double xi) {
  if (!(xi >= 0.0)) throw ValidationError("eval_imag_axis: xi must be >= 0");
  if (xi == 0.0 && model.is_metal()) return std::numeric_limits<double>::infinity();
  double eps = 1.0;
  if (model.is_metal()) eps += model.omega_p * model.omega_p / (xi * (xi + 1.0 / model.tau_D));
  for (const auto& o : model.oscillators) eps += o.strength / (o.omega * o.omega + xi * o.gamma + xi * xi);
  return eps;
}

double eval_imag_axis_causal(const DrudeLorentzModel& model, double xi) {
  if (!(xi >= 0.0)) throw ValidationError("eval_imag_axis_causal: xi must be >= 0");
  if (xi == 0.0 && model.is_metal()) return std::numeric_limits<double>::infinity();
  double eps = 1.0;
  if (model.is_metal()) eps += model.omega_p * model.omega_p / (xi * (xi + 1.0 / model.tau_D));
  for (const auto& o : model.oscillators) {
    // A Lorentz line with gamma < 0 has loss -xi_j*...; its Hilbert transform
    // flips sign and keeps the poles in the lower half plane.
    const double sign = o.gamma < 0.0 ? -1.0 : 1.0;
    eps += sign * o.strength / (o.omega * o.omega + xi * std::abs(o.gamma) + xi * xi);
  }
  return eps;
}

void validate_imag_axis(const DrudeLorentzModel& model, const std::vector<double>& xi, bool causal) {
  for (double x : xi) {
    const double e = causal ? eval_imag_axis_causal(model, x) : eval_imag_axis(model, x);
    if (!(e > 1.0)) {
      std::ostringstream msg;
      msg << "eps(i xi) = " << e << " <= 1 at xi = " << x << " s^-1";
      throw ValidationError(msg.str());
    }
  }
}

std::vector<double> validation_grid(double xi_min, double xi_max, int per_decade) {
  const double decades = std::log10(xi_max / xi_min);
  const int n = std::max(2, static_cast<int>(std::ceil(decades * per_decade)) + 1);
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = xi_min * std::pow(10.0, decades * i / (n - 1));
  return out;
}

TabulatedSpectrum tabulate_model(const DrudeLorentzModel& model, double omega_min, double omega_max,
                                 int points_per_decade, Provenance provenance) {
  if (!(omega_min > 0.0 && omega_max > omega_min) || points_per_decade < 1)
    throw ValidationError("tabulate_model: invalid range");
  const auto grid = validation_grid(omega_min, omega_max, points_per_decade);
  TabulatedSpectrum s;
  s.points.reserve(grid.size());
  for (double w : grid) {
    const auto e = eval_real_axis(model, w);
    s.points.push_back({w, e.real(), e.imag(), provenance});
  }
  return s;
}

namespace {

// Int_0^W d omega / ((omega^2 + g^2)(omega^2 + xi^2)).
double drude_tail_integral(double g, double xi, double W) {
  const double d = xi * xi - g * g;
  if (std::abs(d) > 1e-6 * xi * xi) return ((1.0 / g) * std::atan(W / g) - (1.0 / xi) * std::atan(W / xi)) / d;
  auto f = [&](double w) { return 1.0 / ((w * w + g * g) * (w * w + xi * xi)); };
  return numerics::integrate(f, 0.0, W, 1e-12).value;
}

// Int_W^inf d omega / (omega^2 (omega^2 + xi^2)).
double power_tail_integral(double xi, double W) {
  const double r = xi / W;
  if (r < 0.1) {
    // 1/(3W^3) - xi^2/(5W^5) + ... ; avoids cancellation in the closed form
    double sum = 0.0, term = 1.0 / (W * W * W);
    for (int k = 0; k < 12; ++k) {
      sum += (k % 2 == 0 ? 1.0 : -1.0) * term / (2 * k + 3);
      term *= r * r;
    }
    return sum;
  }
  return (1.0 / W - (std::numbers::pi / 2.0 - std::atan(W / xi)) / xi) / (xi * xi);
}

void check_coverage(const TabulatedSpectrum& s, double xi, const KKOptions& opt) {
  if (s.size() < 2) throw CoverageError("kk_transform: spectrum needs at least two points", {});
  const double lo = std::log10(s.omega_min());
  const double hi = std::log10(s.omega_max());
  if (hi - lo < opt.min_decades) {
    // Report the whole decades of a window centred on xi that the table misses.
    std::vector<double> missing;
    const double centre = xi > 0.0 ? std::log10(xi) : 0.5 * (lo + hi);
    const double start = std::floor(centre - opt.min_decades / 2.0);
    for (int k = 0; k < static_cast<int>(std::ceil(opt.min_decades)); ++k) {
      const double d = start + k;
      if (d < std::floor(lo) || d + 1.0 > std::ceil(hi)) missing.push_back(d);
    }
    std::ostringstream msg;
    msg << "kk_transform: spectrum spans " << (hi - lo) << " decades, need " << opt.min_decades
        << "; missing decades (log10 omega):";
    for (double d : missing) msg << ' ' << d;
    throw CoverageError(msg.str(), std::move(missing));
  }
  if (xi < s.omega_min() / 10.0 || xi > s.omega_max() * 10.0) {
    std::ostringstream msg;
    msg << "kk_transform: xi = " << xi << " outside [" << s.omega_min() / 10.0 << ", " << s.omega_max() * 10.0
        << "]";
    throw CoverageError(msg.str(), {});
  }
}

}  // namespace

double kk_transform(const TabulatedSpectrum& s, double xi, const KKOptions& opt) {
  s.validate();
  check_coverage(s, xi, opt);
  const auto rule = numerics::gauss_legendre(opt.gauss_points);
  const double xi2 = xi * xi;

  // Interior: eps'' linear in u = ln(omega); integrand omega^2 eps''/(omega^2+xi^2) du.
  double interior = 0.0;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const double u0 = std::log(s.points[i].omega), u1 = std::log(s.points[i + 1].omega);
    const double e0 = s.points[i].eps_imag, e1 = s.points[i + 1].eps_imag;
    if (e0 == 0.0 && e1 == 0.0) continue;
    const double h = 0.5 * (u1 - u0);
    double seg = 0.0;
    for (int k = 0; k < opt.gauss_points; ++k) {
      const double t = 0.5 * (rule.nodes[k] + 1.0);
      const double u = u0 + 2.0 * h * t;
      const double w = std::exp(u);
      const double e = e0 + (e1 - e0) * t;
      seg += rule.weights[k] * w * w * e / (w * w + xi2);
    }
    interior += seg * h;
  }

  // Low tail: Drude line through the first point when it looks metallic.
  double low = 0.0;
  {
    const auto& p = s.points.front();
    if (p.eps_real < 1.0 && p.eps_imag > 0.0) {
      const double g = p.omega * p.eps_imag / (1.0 - p.eps_real);
      const double wp2 = (1.0 - p.eps_real) * (p.omega * p.omega + g * g);
      low = wp2 * g * drude_tail_integral(g, xi, p.omega);
    }
  }

  double high = 0.0;
  {
    const auto& p = s.points.back();
    if (p.eps_imag > 0.0) high = p.eps_imag * p.omega * p.omega * p.omega * power_tail_integral(xi, p.omega);
  }

  return 1.0 + (2.0 / std::numbers::pi) * (interior + low + high);
}

std::complex<double> ellipsometry_to_epsilon(const EllipsometricPoint& pt) {
  if (!(pt.psi >= 0.0 && pt.psi < std::numbers::pi / 2.0)) throw ValidationError("ellipsometry: psi outside [0, pi/2)");
  if (!(pt.phi > 0.0 && pt.phi < std::numbers::pi / 2.0)) throw ValidationError("ellipsometry: phi outside (0, pi/2)");
  const std::complex<double> rho = std::tan(pt.psi) * std::exp(std::complex<double>(0.0, pt.delta));
  const std::complex<double> one(1.0, 0.0);
  if (std::abs(one + rho) < 1e-12) throw ValidationError("ellipsometry: rho = -1 is singular");
  const double s = std::sin(pt.phi);
  const double t = std::tan(pt.phi);
  const auto q = (one - rho) / (one + rho);
  return s * s * (one + t * t * q * q);
}

// ---------------------------------------------------------------------------
// Fitting

namespace {

struct FitLayout {
  int n_osc = 0;
  std::vector<double> scale;  // per-oscillator frequency scale (initial omega_j)

  Eigen::VectorXd pack(const DrudeLorentzModel& m) const {
    Eigen::VectorXd x(2 + 3 * n_osc);
    x[0] = std::log(m.omega_p);
    x[1] = std::log(m.tau_D);
    for (int j = 0; j < n_osc; ++j) {
      const auto& o = m.oscillators[j];
      x[2 + 3 * j] = std::log(o.omega);
      x[3 + 3 * j] = o.strength / (scale[j] * scale[j]);
      x[4 + 3 * j] = o.gamma / scale[j];
    }
    return x;
  }

  DrudeLorentzModel unpack(const Eigen::VectorXd& x) const {
    DrudeLorentzModel m;
    m.omega_p = std::exp(x[0]);
    m.tau_D = std::exp(x[1]);
    m.oscillators.resize(n_osc);
    for (int j = 0; j < n_osc; ++j) {
      m.oscillators[j] = {std::exp(x[2 + 3 * j]), x[3 + 3 * j] * scale[j] * scale[j], x[4 + 3 * j] * scale[j]};
    }
    return m;
  }
};

// eps'' residuals use asinh(x / (2 delta)), which equals ln(x / delta) for
// x >> delta but stays defined if a trial model goes non-passive.
constexpr double kImagSoftening = 1e-4;

void fit_residuals(const TabulatedSpectrum& s, const FitLayout& layout, const Eigen::VectorXd& x,
                   Eigen::VectorXd& r, Eigen::MatrixXd* J) {
  using C = std::complex<double>;
  const C I(0.0, 1.0);
  const auto model = layout.unpack(x);
  std::size_t rows = s.size();
  for (const auto& p : s.points)
    if (p.eps_imag > 0.0) ++rows;
  r.resize(static_cast<Eigen::Index>(rows));
  if (J) J->setZero(static_cast<Eigen::Index>(rows), x.size());
  std::vector<C> deps(static_cast<std::size_t>(x.size()));

  Eigen::Index row = 0;
  for (const auto& p : s.points) {
    const double w = p.omega;
    const double g = 1.0 / model.tau_D;
    const double wp2 = model.omega_p * model.omega_p;
    const C drude_den = w * (w + I * g);
    C eps = 1.0 - wp2 / drude_den;
    deps[0] = -2.0 * wp2 / drude_den;
    deps[1] = -g * I * wp2 / (w * (w + I * g) * (w + I * g));
    for (int j = 0; j < layout.n_osc; ++j) {
      const auto& o = model.oscillators[j];
      const C q = o.omega * o.omega - I * w * o.gamma - w * w;
      eps += o.strength / q;
      const double sc = layout.scale[j];
      deps[2 + 3 * j] = -o.strength * 2.0 * o.omega * o.omega / (q * q);
      deps[3 + 3 * j] = sc * sc / q;
      deps[4 + 3 * j] = sc * o.strength * I * w / (q * q);
    }
    r[row] = std::asinh(eps.real()) - std::asinh(p.eps_real);
    if (J) {
      const double d = 1.0 / std::sqrt(1.0 + eps.real() * eps.real());
      for (Eigen::Index k = 0; k < x.size(); ++k) (*J)(row, k) = d * deps[k].real();
    }
    ++row;
    if (p.eps_imag > 0.0) {
      const double delta2 = 2.0 * kImagSoftening * p.eps_imag;
      r[row] = std::asinh(eps.imag() / delta2) - std::asinh(p.eps_imag / delta2);
      if (J) {
        const double z = eps.imag() / delta2;
        const double d = 1.0 / (delta2 * std::sqrt(1.0 + z * z));
        for (Eigen::Index k = 0; k < x.size(); ++k) (*J)(row, k) = d * deps[k].imag();
      }
      ++row;
    }
  }
}

DrudeLorentzModel default_initial(const TabulatedSpectrum& s, int n_osc) {
  DrudeLorentzModel m;
  const auto& p = s.points.front();
  if (p.eps_real < 1.0 && p.eps_imag > 0.0) {
    const double g = p.omega * p.eps_imag / (1.0 - p.eps_real);
    m.omega_p = std::sqrt((1.0 - p.eps_real) * (p.omega * p.omega + g * g));
    m.tau_D = 1.0 / g;
  } else {
    m.omega_p = 1e-4 * s.omega_min();
    m.tau_D = 1.0 / s.omega_min();
  }
  const double lo = std::log(s.omega_min()), hi = std::log(s.omega_max());
  for (int j = 0; j < n_osc; ++j) {
    const double w = std::exp(lo + (hi - lo) * (j + 0.5) / n_osc);
    m.oscillators.push_back({w, 0.5 * w * w, 0.3 * w});
  }
  return m;
}

}  // namespace

FitReport fit_model(const TabulatedSpectrum& spectrum, int n_oscillators,
                    const std::optional<DrudeLorentzModel>& initial, const FitOptions& options) {
  spectrum.validate();
  if (n_oscillators < 0) throw ValidationError("fit_model: n_oscillators must be >= 0");
  const std::size_t needed = 3u * static_cast<std::size_t>(2 + 3 * n_oscillators);
  if (spectrum.size() < needed)
    throw ValidationError("fit_model: need at least " + std::to_string(needed) + " points, got " +
                          std::to_string(spectrum.size()));
  DrudeLorentzModel start = initial ? *initial : default_initial(spectrum, n_oscillators);
  if (static_cast<int>(start.oscillators.size()) != n_oscillators)
    throw ValidationError("fit_model: initial model has wrong oscillator count");
  if (!(start.omega_p > 0.0)) start.omega_p = 1e-4 * spectrum.omega_min();
  if (!(start.tau_D > 0.0)) start.tau_D = 1.0 / spectrum.omega_min();
  start.validate();

  FitLayout layout;
  layout.n_osc = n_oscillators;
  for (const auto& o : start.oscillators) layout.scale.push_back(o.omega);

  const numerics::ResidualFunction fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd* J) {
    fit_residuals(spectrum, layout, x, r, J);
  };
  numerics::LevenbergMarquardtOptions lm;
  lm.max_iterations = options.max_iterations;

  FitReport best;
  bool have = false;
  const Eigen::VectorXd x0 = layout.pack(start);
  const int starts = std::max(1, options.multistart);
  for (int k = 0; k < starts; ++k) {
    Eigen::VectorXd xs = x0;
    if (k > 0) {
      auto rng = numerics::keyed_engine(options.seed, 0x66697430ULL, static_cast<std::uint64_t>(k));
      std::normal_distribution<double> n01;
      for (Eigen::Index i = 0; i < xs.size(); ++i) {
        const bool logparam = i < 2 || (i - 2) % 3 == 0;
        if (logparam)
          xs[i] += options.perturbation * n01(rng);
        else
          xs[i] *= std::exp(options.perturbation * n01(rng));
      }
    }
    numerics::LevenbergMarquardtResult res;
    try {
      res = numerics::levenberg_marquardt(fn, xs, lm);
    } catch (const ConvergenceError&) {
      continue;
    }
    const double norm = std::sqrt(2.0 * res.cost);
    if (!have || norm < best.residual_norm) {
      have = true;
      best.model = layout.unpack(res.x);
      best.residual_norm = norm;
      best.iterations = res.iterations;
      best.converged = res.converged && res.iterations < options.max_iterations;
      best.residual_count = static_cast<int>(res.residual.size());
    }
  }
  if (!have) throw ConvergenceError("fit_model: every start produced non-finite residuals");
  best.starts = starts;
  best.boundary = best.model.omega_p / spectrum.omega_min() < 1e-3;
  for (int j = 0; j < n_oscillators; ++j) {
    const auto& o = best.model.oscillators[static_cast<std::size_t>(j)];
    const bool finite = std::isfinite(o.omega) && std::isfinite(o.strength) && std::isfinite(o.gamma);
    if (!finite || o.omega < 1e-2 * spectrum.omega_min() || o.omega > 1e2 * spectrum.omega_max())
      best.collapsed.push_back(j);
  }
  if (!best.collapsed.empty()) best.converged = false;
  best.weighting = "equal: asinh(eps') and ln(eps'') residuals, unit weight per point";
  best.parameters.resize(2 + 3 * n_oscillators);
  best.parameters[0] = best.model.omega_p;
  best.parameters[1] = best.model.tau_D;
  for (int j = 0; j < n_oscillators; ++j) {
    best.parameters[2 + 3 * j] = best.model.oscillators[j].omega;
    best.parameters[3 + 3 * j] = best.model.oscillators[j].strength;
    best.parameters[4 + 3 * j] = best.model.oscillators[j].gamma;
  }
  return best;
}

TabulatedSpectrum merge_with_literature(const TabulatedSpectrum& measured, const TabulatedSpectrum& literature,
                                        double crossover) {
  measured.validate();
  literature.validate();
  if (literature.empty() || !(literature.omega_max() > crossover))
    throw ValidationError("merge_with_literature: literature does not extend above the crossover");
  TabulatedSpectrum out;
  for (const auto& p : measured.points)
    if (p.omega <= crossover) out.points.push_back({p.omega, p.eps_real, p.eps_imag, Provenance::Measured});
  for (const auto& p : literature.points)
    if (p.omega > crossover) out.points.push_back({p.omega, p.eps_real, p.eps_imag, Provenance::Literature});
  const auto split = std::find_if(out.points.begin(), out.points.end(),
                                  [](const SpectrumPoint& p) { return p.provenance == Provenance::Literature; });
  if (split != out.points.begin() && split != out.points.end()) {
    const double ratio = split->omega / std::prev(split)->omega;
    if (ratio > 10.0) {
      std::ostringstream msg;
      msg << "merge_with_literature: gap from " << std::prev(split)->omega << " to " << split->omega
          << " exceeds one decade";
      throw GapError(msg.str());
    }
  }
  return out;
}

DrudeLorentzModel parse_model_table(std::string_view text) {
  DrudeLorentzModel m;
  bool have_wp = false, have_tau = false;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  auto number = [&](const std::string& tok) {
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
      throw ValidationError("model table line " + std::to_string(lineno) + ": bad number '" + tok + "'");
    return v;
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok[0] == "omega_p" && tok.size() == 2) {
      m.omega_p = number(tok[1]);
      have_wp = true;
    } else if (tok[0] == "tau_D" && tok.size() == 2) {
      m.tau_D = number(tok[1]);
      have_tau = true;
    } else if (tok.size() == 4) {
      const auto j = static_cast<std::size_t>(number(tok[0]));
      if (j != m.oscillators.size() + 1)
        throw ValidationError("model table line " + std::to_string(lineno) + ": oscillators out of order");
      m.oscillators.push_back({number(tok[1]), number(tok[2]), number(tok[3])});
    } else {
      throw ValidationError("model table line " + std::to_string(lineno) + ": unrecognised entry");
    }
  }
  if (!have_wp || !have_tau) throw ValidationError("model table: missing omega_p or tau_D");
  m.validate();
  return m;
}

namespace bundled {
extern const char* const au_table;
extern const char* const psi_table;
}  // namespace bundled

std::string_view bundled_table_text(std::string_view name) {
  if (name == "au" || name == "Au") return bundled::au_table;
  if (name == "psi" || name == "PSI" || name == "psi1") return bundled::psi_table;
  throw ValidationError("no bundled model named '" + std::string(name) + "'");
}

namespace {
DrudeLorentzModel load_bundled(std::string_view name) {
  auto m = parse_model_table(bundled_table_text(name));
  validate_imag_axis(m, validation_grid(), /*causal=*/true);
  return m;
}
}  // namespace

const DrudeLorentzModel& bundled_au() {
  static const DrudeLorentzModel m = load_bundled("au");
  return m;
}

const DrudeLorentzModel& bundled_psi() {
  static const DrudeLorentzModel m = load_bundled("psi");
  return m;
}

}  // namespace casimir
