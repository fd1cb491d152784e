#include "casimir/surfaces.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "casimir/constants.hpp"
#include "casimir/numerics/least_squares.hpp"
#include "casimir/numerics/quadrature.hpp"
#include "casimir/numerics/random.hpp"
#include "casimir/numerics/stats.hpp"

namespace casimir {

namespace {
constexpr std::uint64_t kStreamRoughness = 0x726f756768ULL;
constexpr std::uint64_t kStreamPatch = 0x7061746368ULL;
constexpr std::uint64_t kStreamSpikes = 0x7370696b65ULL;
constexpr double kBandLo = 0.1585;
constexpr double kBandHi = 0.8415;
}  // namespace

HeightMap::HeightMap(Grid heights, double pitch_m, MapRole r) : z(std::move(heights)), pitch(pitch_m), role(r) {
  origin_x = 0.5 * pitch * static_cast<double>(nx() - 1);
  origin_y = 0.5 * pitch * static_cast<double>(ny() - 1);
}

void HeightMap::validate() const {
  if (z.size() == 0) throw ValidationError("height map: empty grid");
  if (!(pitch > 0.0)) throw ValidationError("height map: pitch must be > 0");
  if (!z.allFinite()) throw ValidationError("height map: non-finite heights");
  if (valid.size() != 0 && (valid.rows() != z.rows() || valid.cols() != z.cols()))
    throw ValidationError("height map: mask shape mismatch");
}

PotentialMap::PotentialMap(Grid values, double pitch_m) : v(std::move(values)), pitch(pitch_m) {}

void PotentialMap::validate() const {
  if (v.size() == 0) throw ValidationError("potential map: empty grid");
  if (!(pitch > 0.0)) throw ValidationError("potential map: pitch must be > 0");
  if (!v.allFinite()) throw ValidationError("potential map: non-finite values");
}

SurfaceStats surface_stats(const HeightMap& map) {
  map.validate();
  if (map.valid.size() == 0) return surface_stats(map.z);
  std::vector<double> vals;
  for (Eigen::Index iy = 0; iy < map.ny(); ++iy)
    for (Eigen::Index ix = 0; ix < map.nx(); ++ix)
      if (map.valid(iy, ix)) vals.push_back(map.z(iy, ix));
  if (vals.empty()) throw ValidationError("surface_stats: every pixel is masked");
  return surface_stats(Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size())));
}

SurfaceStats surface_stats(const PotentialMap& map) {
  map.validate();
  return surface_stats(map.v);
}

// ---------------------------------------------------------------------------

namespace {

struct Samples {
  Eigen::VectorXd x, y, z;
};

Samples usable_pixels(const HeightMap& map) {
  std::vector<double> xs, ys, zs;
  for (Eigen::Index iy = 0; iy < map.ny(); ++iy)
    for (Eigen::Index ix = 0; ix < map.nx(); ++ix)
      if (map.is_valid(iy, ix)) {
        xs.push_back(map.pitch * static_cast<double>(ix));
        ys.push_back(map.pitch * static_cast<double>(iy));
        zs.push_back(map.z(iy, ix));
      }
  Samples s;
  s.x = Eigen::Map<Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
  s.y = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  s.z = Eigen::Map<Eigen::VectorXd>(zs.data(), static_cast<Eigen::Index>(zs.size()));
  return s;
}

// Sag of a sphere with curvature k at lateral radius rho, stable for small k rho.
double sag(double k, double rho2) { return k * rho2 / (1.0 + std::sqrt(std::max(0.0, 1.0 - k * k * rho2))); }

}  // namespace

SphereFit fit_sphere(const HeightMap& map) {
  map.validate();
  const Samples s = usable_pixels(map);
  if (s.z.size() < 5) throw ValidationError("fit_sphere: fewer than 5 usable pixels");
  const double L = std::max(map.side_x(), map.side_y());
  const double x0 = map.origin_x, y0 = map.origin_y;

  // Paraboloid seed: z = c0 + c1 x + c2 y + c3 (x^2 + y^2) in units of L.
  const Eigen::VectorXd xs = (s.x.array() - x0) / L;
  const Eigen::VectorXd ys = (s.y.array() - y0) / L;
  Eigen::MatrixXd A(s.z.size(), 4);
  A.col(0).setOnes();
  A.col(1) = xs;
  A.col(2) = ys;
  A.col(3) = xs.array().square() + ys.array().square();
  const Eigen::VectorXd zs = s.z / L;
  const auto lin = numerics::linear_least_squares(A, zs);
  const double c3 = lin.coefficients[3];
  const double k_scaled = -2.0 * c3;  // curvature times L

  SphereFit fit;
  auto plane_residual = [&]() {
    Eigen::MatrixXd P(s.z.size(), 3);
    P.col(0).setOnes();
    P.col(1) = xs;
    P.col(2) = ys;
    const auto pl = numerics::linear_least_squares(P, zs);
    fit.degenerate = true;
    fit.converged = true;
    fit.radius = std::numeric_limits<double>::infinity();
    fit.center_x = x0;
    fit.center_y = y0;
    fit.apex = pl.coefficients[0] * L;
    fit.residual = map;
    for (Eigen::Index iy = 0; iy < map.ny(); ++iy)
      for (Eigen::Index ix = 0; ix < map.nx(); ++ix) {
        const double xx = (map.pitch * ix - x0) / L, yy = (map.pitch * iy - y0) / L;
        fit.residual.z(iy, ix) = map.z(iy, ix) - L * (pl.coefficients[0] + pl.coefficients[1] * xx + pl.coefficients[2] * yy);
      }
    fit.residual_rms = surface_stats(fit.residual).rms;
    return fit;
  };
  const double half = 0.5 * std::min(map.side_x(), map.side_y());
  if (!(k_scaled > 0.0) || k_scaled / L * half * half / 2.0 < 1e-12) return plane_residual();

  // Exact cap by damped Gauss-Newton, parameters [apex/L, cx/L, cy/L, k L].
  Eigen::VectorXd p0(4);
  p0 << lin.coefficients[0] + (lin.coefficients[1] * lin.coefficients[1] + lin.coefficients[2] * lin.coefficients[2]) /
                                  (4.0 * -c3),
      lin.coefficients[1] / k_scaled, lin.coefficients[2] / k_scaled, k_scaled;
  const numerics::ResidualFunction fn = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* J) {
    r.resize(s.z.size());
    if (J) J->resize(s.z.size(), 4);
    const double k = p[3];
    for (Eigen::Index i = 0; i < s.z.size(); ++i) {
      const double dx = xs[i] - p[1], dy = ys[i] - p[2];
      const double rho2 = dx * dx + dy * dy;
      const double root = std::sqrt(std::max(1e-300, 1.0 - k * k * rho2));
      r[i] = p[0] - sag(k, rho2) - zs[i];
      if (J) {
        (*J)(i, 0) = 1.0;
        (*J)(i, 1) = -k * dx / root;
        (*J)(i, 2) = -k * dy / root;
        // d sag / dk = rho^2 / (root (1 + root))
        (*J)(i, 3) = -rho2 / (root * (1.0 + root));
      }
    }
  };
  numerics::LevenbergMarquardtOptions opt;
  opt.max_iterations = 200;
  const auto res = numerics::levenberg_marquardt(fn, p0, opt);
  const double k = res.x[3] / L;
  fit.converged = res.converged;
  fit.apex = res.x[0] * L;
  fit.center_x = x0 + res.x[1] * L;
  fit.center_y = y0 + res.x[2] * L;
  fit.residual_rms = std::sqrt(2.0 * res.cost / static_cast<double>(s.z.size())) * L;
  const double sag_edge = k * half * half / 2.0;
  if (!(k > 0.0) || sag_edge < std::max(3.0 * fit.residual_rms, 1e-12)) return plane_residual();
  if (!res.converged) throw ConvergenceError("fit_sphere: cap fit did not converge");
  fit.radius = 1.0 / k;
  fit.residual = map;
  fit.residual.role = MapRole::Sphere;
  fit.residual.origin_x = fit.center_x;
  fit.residual.origin_y = fit.center_y;
  for (Eigen::Index iy = 0; iy < map.ny(); ++iy)
    for (Eigen::Index ix = 0; ix < map.nx(); ++ix) {
      const double dx = map.pitch * ix - fit.center_x, dy = map.pitch * iy - fit.center_y;
      fit.residual.z(iy, ix) = map.z(iy, ix) - (fit.apex - sag(k, dx * dx + dy * dy));
    }
  return fit;
}

PeakReport preprocess_peaks(const HeightMap& map, double cutoff) {
  map.validate();
  if (!(cutoff > 0.0)) throw ValidationError("preprocess_peaks: cutoff must be > 0");
  std::vector<double> vals;
  for (Eigen::Index iy = 0; iy < map.ny(); ++iy)
    for (Eigen::Index ix = 0; ix < map.nx(); ++ix)
      if (map.is_valid(iy, ix)) vals.push_back(map.z(iy, ix));
  if (vals.empty()) throw ValidationError("preprocess_peaks: every pixel is masked");
  const double med = numerics::median(vals);
  PeakReport out;
  out.map = map;
  out.map.z.array() -= med;
  out.map.valid = (out.map.z.array() <= cutoff);
  if (map.valid.size() != 0) out.map.valid = out.map.valid && map.valid;
  const auto masked = static_cast<double>((!out.map.valid).count());
  out.masked_fraction = masked / static_cast<double>(map.z.size());
  out.quality_warning = out.masked_fraction > 0.2;
  return out;
}

// ---------------------------------------------------------------------------

GradientLaw::GradientLaw(const std::vector<double>& h, const std::vector<double>& g) {
  if (h.size() != g.size() || h.size() < 2) throw ValidationError("gradient law: need >= 2 matching samples");
  Eigen::VectorXd x(static_cast<Eigen::Index>(h.size())), y(static_cast<Eigen::Index>(h.size()));
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (!(h[i] > 0.0) || !(g[i] > 0.0)) throw ValidationError("gradient law: samples must be positive");
    x[static_cast<Eigen::Index>(i)] = std::log(h[i]);
    y[static_cast<Eigen::Index>(i)] = std::log(g[i]);
  }
  spline_ = numerics::NaturalCubicSpline(x, y);
}

GradientLaw GradientLaw::from_lifshitz(const MaterialAssignment& materials, const LifshitzConfig& config,
                                       double h_min, double h_max, int samples) {
  std::vector<double> h(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) h[i] = h_min * std::pow(h_max / h_min, static_cast<double>(i) / (samples - 1));
  const auto curve = gradient_curve(h, materials, config);
  std::vector<double> g;
  for (const auto& p : curve) g.push_back(p.value);
  return GradientLaw(h, g);
}

GradientLaw GradientLaw::power_law(double g0, double h0, double exponent) {
  std::vector<double> h{h0 * 0.1, h0, h0 * 10.0};
  std::vector<double> g;
  for (double x : h) g.push_back(g0 * std::pow(x / h0, -exponent));
  return GradientLaw(h, g);
}

double GradientLaw::operator()(double h) const { return std::exp(spline_(std::log(h))); }

double GradientLaw::derivative(double h) const {
  const double lh = std::log(h);
  return std::exp(spline_(lh)) * spline_.derivative(lh) / h;
}

// ---------------------------------------------------------------------------

PolarNodes polar_nodes(double a, double R, int radial, int angular, double t_min) {
  if (!(a > 0.0 && R > a)) throw ValidationError("polar_nodes: need 0 < a < R");
  if (!(t_min > 0.0 && t_min < 1.0)) throw ValidationError("polar_nodes: t_min outside (0, 1)");
  const auto rule = numerics::gauss_legendre(radial, t_min, 1.0);
  PolarNodes n;
  n.rho.resize(radial);
  n.u.resize(radial);
  n.weight.resize(radial);
  for (int k2 = 0; k2 < radial; ++k2) {
    const double t = rule.nodes[k2];
    const double u = a / t - a;
    if (u >= R) throw GeometryError("polar_nodes: integration rim beyond the sphere equator");
    n.u[k2] = u;
    n.rho[k2] = std::sqrt(u * (2.0 * R - u));
    n.weight[k2] = rule.weights[k2] * (a / (t * t)) * (R - u);
  }
  n.cos_phi.resize(angular);
  n.sin_phi.resize(angular);
  n.dphi = 2.0 * std::numbers::pi / angular;
  for (int j = 0; j < angular; ++j) {
    const double phi = n.dphi * (j + 0.5);
    n.cos_phi[j] = std::cos(phi);
    n.sin_phi[j] = std::sin(phi);
  }
  return n;
}

namespace {

template <class ValueAt>
double bilinear(Eigen::Index nx, Eigen::Index ny, double pitch, double x, double y, bool periodic, ValueAt&& at) {
  const double fx = x / pitch, fy = y / pitch;
  const double flx = std::floor(fx), fly = std::floor(fy);
  const double tx = fx - flx, ty = fy - fly;
  auto ix0 = static_cast<Eigen::Index>(flx), iy0 = static_cast<Eigen::Index>(fly);
  auto value = [&](Eigen::Index iy, Eigen::Index ix) -> double {
    if (periodic) {
      ix = ((ix % nx) + nx) % nx;
      iy = ((iy % ny) + ny) % ny;
    } else if (ix < 0 || iy < 0 || ix >= nx || iy >= ny) {
      return 0.0;
    }
    return at(iy, ix);
  };
  return (1.0 - ty) * ((1.0 - tx) * value(iy0, ix0) + tx * value(iy0, ix0 + 1)) +
         ty * ((1.0 - tx) * value(iy0 + 1, ix0) + tx * value(iy0 + 1, ix0 + 1));
}

}  // namespace

double sample_bilinear(const HeightMap& map, double x, double y, bool periodic) {
  return bilinear(map.nx(), map.ny(), map.pitch, x, y, periodic, [&](Eigen::Index iy, Eigen::Index ix) {
    return map.is_valid(iy, ix) ? map.z(iy, ix) : 0.0;
  });
}

double sample_bilinear(const PotentialMap& map, double x, double y, bool periodic) {
  return bilinear(map.nx(), map.ny(), map.pitch, x, y, periodic,
                  [&](Eigen::Index iy, Eigen::Index ix) { return map.v(iy, ix); });
}

namespace {

// Sphere residual sampled on the polar nodes (fixed for a given a).
Eigen::MatrixXd sphere_samples(const PolarNodes& n, const HeightMap& sphere) {
  Eigen::MatrixXd s(n.rho.size(), n.cos_phi.size());
  for (Eigen::Index k2 = 0; k2 < n.rho.size(); ++k2)
    for (Eigen::Index j = 0; j < n.cos_phi.size(); ++j)
      s(k2, j) = sample_bilinear(sphere, sphere.origin_x + n.rho[k2] * n.cos_phi[j],
                                 sphere.origin_y + n.rho[k2] * n.sin_phi[j], false);
  return s;
}

struct EtaParts {
  double eta = 1.0;
  double min_gap = 0.0;
};

EtaParts eta_at(double a, double R, const PolarNodes& n, const Eigen::MatrixXd& sphere_vals, const HeightMap& plate,
                double sx, double sy, const GradientLaw& law) {
  double num = 0.0, den = 0.0;
  double min_gap = std::numeric_limits<double>::infinity();
  double rim_offset = 0.0;
  const Eigen::Index outer = 0;  // smallest t: outermost ring
  for (Eigen::Index k2 = 0; k2 < n.rho.size(); ++k2) {
    const double smooth = a + n.u[k2];
    const double ds = law.derivative(smooth);
    double ring = 0.0, ring_s = 0.0;
    for (Eigen::Index j = 0; j < n.cos_phi.size(); ++j) {
      const double rp = sample_bilinear(plate, sx + n.rho[k2] * n.cos_phi[j], sy + n.rho[k2] * n.sin_phi[j], true);
      const double offset = sphere_vals(k2, j) + rp;
      const double h = smooth - offset;
      min_gap = std::min(min_gap, h);
      if (!(h > 0.0)) return {std::numeric_limits<double>::quiet_NaN(), h};
      ring += law.derivative(h);
      ring_s += ds;
      if (k2 == outer) rim_offset += offset;
    }
    num += n.weight[k2] * ring * n.dphi;
    den += n.weight[k2] * ring_s * n.dphi;
  }
  // Smooth-surface remainder beyond the rim, shifted by the rim's mean offset.
  rim_offset /= static_cast<double>(n.cos_phi.size());
  const double rim = a + n.u[outer];
  num -= 2.0 * std::numbers::pi * R * law(rim - rim_offset);
  den -= 2.0 * std::numbers::pi * R * law(rim);
  return {num / den, min_gap};
}

void check_sphere_coverage(const HeightMap& sphere, double a_max, double R) {
  const double spot = std::sqrt(2.0 * a_max * R);
  const double reach_x = std::min(sphere.origin_x, sphere.pitch * (sphere.nx() - 1) - sphere.origin_x);
  const double reach_y = std::min(sphere.origin_y, sphere.pitch * (sphere.ny() - 1) - sphere.origin_y);
  if (std::min(reach_x, reach_y) < spot) {
    std::ostringstream msg;
    msg << "sphere map reaches " << std::min(reach_x, reach_y) << " m from the apex; the interaction spot needs "
        << spot << " m";
    throw GeometryError(msg.str());
  }
}

void summarize(CorrectionResult& out, const std::vector<std::vector<double>>& runs, bool gradient) {
  const std::size_t na = out.a_grid.size();
  auto& mean = gradient ? out.gradient : out.eta;
  auto& lo = gradient ? out.gradient_lo : out.band_lo;
  auto& hi = gradient ? out.gradient_hi : out.band_hi;
  mean.assign(na, 0.0);
  lo.assign(na, 0.0);
  hi.assign(na, 0.0);
  if (runs.empty()) return;
  for (std::size_t i = 0; i < na; ++i) {
    std::vector<double> col;
    col.reserve(runs.size());
    for (const auto& r : runs) col.push_back(r[i]);
    mean[i] = numerics::mean(col);
    lo[i] = std::min(numerics::quantile(col, kBandLo), mean[i]);
    hi[i] = std::max(numerics::quantile(col, kBandHi), mean[i]);
  }
}

std::vector<double> sorted_check(const std::vector<double>& a_grid) {
  if (a_grid.empty()) throw ValidationError("correction: empty separation grid");
  for (double a : a_grid)
    if (!(a > 0.0)) throw ValidationError("correction: separations must be > 0");
  return a_grid;
}

}  // namespace

double roughness_eta_single(double a, const HeightMap& sphere, const HeightMap& plate, double R,
                            const GradientLaw& law, double shift_x, double shift_y, const RoughnessOptions& opt,
                            double* min_gap) {
  const auto nodes = polar_nodes(a, R, opt.radial_nodes, opt.angular_nodes, opt.t_min);
  const auto sv = sphere_samples(nodes, sphere);
  const auto parts = eta_at(a, R, nodes, sv, plate, shift_x, shift_y, law);
  if (min_gap) *min_gap = parts.min_gap;
  if (std::isnan(parts.eta)) throw GeometryError("roughness: surfaces touch at this shift");
  return parts.eta;
}

CorrectionResult roughness_eta(const std::vector<double>& a_grid_in, const HeightMap& sphere, const HeightMap& plate,
                               double R, const GradientLaw& law, const RoughnessOptions& opt) {
  sphere.validate();
  plate.validate();
  if (opt.n_mc < 1) throw ValidationError("roughness_eta: n_mc must be >= 1");
  const auto a_grid = sorted_check(a_grid_in);
  const double a_max = *std::max_element(a_grid.begin(), a_grid.end());
  check_sphere_coverage(sphere, a_max, R);

  std::vector<PolarNodes> nodes;
  std::vector<Eigen::MatrixXd> sv;
  for (double a : a_grid) {
    nodes.push_back(polar_nodes(a, R, opt.radial_nodes, opt.angular_nodes, opt.t_min));
    sv.push_back(sphere_samples(nodes.back(), sphere));
  }
  const auto i_min = static_cast<std::size_t>(std::min_element(a_grid.begin(), a_grid.end()) - a_grid.begin());

  CorrectionResult out;
  out.a_grid = a_grid;
  std::vector<std::vector<double>> runs;
  const int max_attempts = opt.max_attempts > 0 ? opt.max_attempts : 20 * opt.n_mc;
  for (int attempt = 0; attempt < max_attempts && static_cast<int>(runs.size()) < opt.n_mc; ++attempt) {
    auto rng = numerics::keyed_engine(opt.seed, kStreamRoughness, static_cast<std::uint64_t>(attempt));
    std::uniform_real_distribution<double> ux(0.0, plate.pitch * plate.nx()), uy(0.0, plate.pitch * plate.ny());
    ShiftLog log;
    log.index = attempt;
    log.x = ux(rng);
    log.y = uy(rng);
    ++out.n_attempts;
    const auto first = eta_at(a_grid[i_min], R, nodes[i_min], sv[i_min], plate, log.x, log.y, law);
    log.min_gap = first.min_gap;
    if (!(first.min_gap >= opt.min_gap)) {
      log.reason = "MIN_GAP";
      out.log.push_back(log);
      continue;
    }
    std::vector<double> run(a_grid.size());
    for (std::size_t i = 0; i < a_grid.size(); ++i)
      run[i] = i == i_min ? first.eta : eta_at(a_grid[i], R, nodes[i], sv[i], plate, log.x, log.y, law).eta;
    log.accepted = true;
    out.log.push_back(log);
    runs.push_back(std::move(run));
  }
  out.n_accepted = static_cast<int>(runs.size());
  summarize(out, runs, false);
  if (out.n_accepted < opt.n_mc) {
    std::ostringstream msg;
    msg << "roughness_eta: " << out.n_accepted << " of " << opt.n_mc << " shifts accepted after " << out.n_attempts
        << " attempts";
    throw SamplingExhaustedError(msg.str(), out);
  }
  return out;
}

// ---------------------------------------------------------------------------

PatchSample patch_single(double a, const PotentialMap& sphere, const PotentialMap& plate, double R, double sx,
                         double sy, const PatchOptions& opt) {
  const auto n = polar_nodes(a, R, opt.radial_nodes, opt.angular_nodes, opt.t_min);
  const double cx = 0.5 * sphere.pitch * static_cast<double>(sphere.nx() - 1);
  const double cy = 0.5 * sphere.pitch * static_cast<double>(sphere.ny() - 1);
  Eigen::MatrixXd dv(n.rho.size(), n.cos_phi.size());
  for (Eigen::Index k2 = 0; k2 < n.rho.size(); ++k2)
    for (Eigen::Index j = 0; j < n.cos_phi.size(); ++j) {
      const double px = n.rho[k2] * n.cos_phi[j], py = n.rho[k2] * n.sin_phi[j];
      dv(k2, j) = sample_bilinear(sphere, cx + px, cy + py, true) - sample_bilinear(plate, sx + px, sy + py, true);
    }
  PatchSample out;
  if (!opt.force_v0_zero) {
    // Bias that minimises the total force Int (dV - V0)^2 / (2 h^2) dA.
    double num = 0.0, den = 0.0;
    for (Eigen::Index k2 = 0; k2 < n.rho.size(); ++k2) {
      const double h = a + n.u[k2];
      const double w = n.weight[k2] / (h * h);
      num += w * dv.row(k2).sum();
      den += w * static_cast<double>(dv.cols());
    }
    out.v0 = num / den;
  }
  const double delta = opt.step * a;
  double energy = 0.0, curvature = 0.0;
  for (Eigen::Index k2 = 0; k2 < n.rho.size(); ++k2) {
    const double h = a + n.u[k2];
    const double v2 = (dv.row(k2).array() - out.v0).square().sum() * n.dphi;
    // second difference of 1/h on fixed lateral nodes
    const double d2 = (1.0 / (h + delta) - 2.0 / h + 1.0 / (h - delta)) / (delta * delta);
    energy += n.weight[k2] * v2 / h;
    curvature += n.weight[k2] * v2 * d2;
  }
  out.energy = 0.5 * constants::epsilon0 * energy;
  out.gradient = 0.5 * constants::epsilon0 * curvature;
  return out;
}

CorrectionResult patch_gradient(const std::vector<double>& a_grid_in, const PotentialMap& sphere,
                                const PotentialMap& plate, double R, const PatchOptions& opt,
                                const std::optional<GradientLaw>& law) {
  sphere.validate();
  plate.validate();
  if (opt.n_mc < 1) throw ValidationError("patch_gradient: n_mc must be >= 1");
  const auto a_grid = sorted_check(a_grid_in);
  CorrectionResult out;
  out.a_grid = a_grid;
  out.note = "outlier rule: |second difference of ln W - median| > " + std::to_string(opt.outlier_mad_factor) +
             " x MAD (stand-in for the qualitative integration-error criterion)";
  std::vector<std::vector<double>> grads, etas;
  const int max_attempts = opt.max_attempts > 0 ? opt.max_attempts : 20 * opt.n_mc;
  for (int attempt = 0; attempt < max_attempts && static_cast<int>(grads.size()) < opt.n_mc; ++attempt) {
    auto rng = numerics::keyed_engine(opt.seed, kStreamPatch, static_cast<std::uint64_t>(attempt));
    std::uniform_real_distribution<double> ux(0.0, plate.pitch * plate.nx()), uy(0.0, plate.pitch * plate.ny());
    ShiftLog log;
    log.index = attempt;
    log.x = ux(rng);
    log.y = uy(rng);
    ++out.n_attempts;
    std::vector<double> g(a_grid.size()), lnw(a_grid.size());
    bool finite = true;
    for (std::size_t i = 0; i < a_grid.size(); ++i) {
      const auto s = patch_single(a_grid[i], sphere, plate, R, log.x, log.y, opt);
      g[i] = s.gradient;
      lnw[i] = s.energy > 0.0 ? std::log(s.energy) : -std::numeric_limits<double>::infinity();
      finite = finite && std::isfinite(s.gradient);
    }
    bool outlier = !finite;
    if (!outlier && a_grid.size() >= 4 && std::all_of(lnw.begin(), lnw.end(), [](double v) { return std::isfinite(v); })) {
      std::vector<double> d2;
      for (std::size_t i = 1; i + 1 < lnw.size(); ++i) d2.push_back(lnw[i + 1] - 2.0 * lnw[i] + lnw[i - 1]);
      const double med = numerics::median(d2);
      const double mad = std::max(numerics::median_absolute_deviation(d2), opt.outlier_floor * std::abs(med) + 1e-300);
      for (double v : d2) outlier = outlier || std::abs(v - med) > opt.outlier_mad_factor * mad;
    }
    if (outlier) {
      log.reason = "ENERGY_OUTLIER";
      out.log.push_back(log);
      continue;
    }
    log.accepted = true;
    out.log.push_back(log);
    std::vector<double> eta(a_grid.size(), 1.0);
    if (law)
      for (std::size_t i = 0; i < a_grid.size(); ++i) eta[i] = 1.0 + g[i] / (*law)(a_grid[i]);
    grads.push_back(std::move(g));
    etas.push_back(std::move(eta));
  }
  out.n_accepted = static_cast<int>(grads.size());
  summarize(out, grads, true);
  summarize(out, etas, false);
  if (out.n_accepted < opt.n_mc) {
    std::ostringstream msg;
    msg << "patch_gradient: " << out.n_accepted << " of " << opt.n_mc << " positions accepted after "
        << out.n_attempts << " attempts";
    throw SamplingExhaustedError(msg.str(), out);
  }
  return out;
}

CorrectionResult unit_correction(const std::vector<double>& a_grid) {
  CorrectionResult c;
  c.a_grid = a_grid;
  c.eta.assign(a_grid.size(), 1.0);
  c.band_lo = c.eta;
  c.band_hi = c.eta;
  c.n_accepted = 1;
  c.n_attempts = 1;
  return c;
}

CombinedReduction combine_corrections(const std::vector<GradientPoint>& ga, const std::vector<GradientPoint>& gb,
                                      const CorrectionResult& ra, const CorrectionResult& rb,
                                      const CorrectionResult& pa, const CorrectionResult& pb) {
  const std::size_t n = ga.size();
  auto aligned = [&](const std::vector<double>& grid) {
    if (grid.size() != n) return false;
    for (std::size_t i = 0; i < n; ++i)
      if (std::abs(grid[i] - ga[i].a) > 1e-12 * std::abs(ga[i].a)) return false;
    return true;
  };
  std::vector<double> grid_b;
  for (const auto& p : gb) grid_b.push_back(p.a);
  if (!aligned(grid_b) || !aligned(ra.a_grid) || !aligned(rb.a_grid) || !aligned(pa.a_grid) || !aligned(pb.a_grid))
    throw ValidationError("combine_corrections: inputs are not on the same separation grid");
  CombinedReduction out;
  for (std::size_t i = 0; i < n; ++i) {
    const double base = (gb[i].value / ga[i].value) * (rb.eta[i] / ra.eta[i]) * (pb.eta[i] / pa.eta[i]);
    // numerator factors raise the ratio at their upper edge, denominators at their lower edge
    const double up = std::hypot(std::hypot(rb.band_hi[i] / rb.eta[i] - 1.0, ra.eta[i] / ra.band_lo[i] - 1.0),
                                 std::hypot(pb.band_hi[i] / pb.eta[i] - 1.0, pa.eta[i] / pa.band_lo[i] - 1.0));
    const double down = std::hypot(std::hypot(1.0 - rb.band_lo[i] / rb.eta[i], 1.0 - ra.eta[i] / ra.band_hi[i]),
                                   std::hypot(1.0 - pb.band_lo[i] / pb.eta[i], 1.0 - pa.eta[i] / pa.band_hi[i]));
    out.a.push_back(ga[i].a);
    out.delta.push_back(base - 1.0);
    out.delta_hi.push_back(base * (1.0 + up) - 1.0);
    out.delta_lo.push_back(base * (1.0 - down) - 1.0);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Circular convolution of every row (or column) with a truncated Gaussian.
void smooth_rows(Grid& g, double sigma_px) {
  const int half = static_cast<int>(std::ceil(4.0 * sigma_px));
  std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
  double sum = 0.0;
  for (int i = -half; i <= half; ++i) sum += kernel[i + half] = std::exp(-0.5 * i * i / (sigma_px * sigma_px));
  for (double& k2 : kernel) k2 /= sum;
  const Eigen::Index n = g.cols();
  Eigen::VectorXd row(n);
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      double acc = 0.0;
      for (int i = -half; i <= half; ++i) acc += kernel[i + half] * g(r, ((c + i) % n + n) % n);
      row[c] = acc;
    }
    g.row(r) = row.transpose();
  }
}

}  // namespace

Grid gaussian_field(Eigen::Index nx, Eigen::Index ny, double pitch, double rms, double corr, std::uint64_t seed,
                    std::uint64_t stream) {
  if (nx < 1 || ny < 1 || !(pitch > 0.0) || !(rms >= 0.0)) throw ValidationError("gaussian_field: invalid arguments");
  Grid g(ny, nx);
  for (Eigen::Index iy = 0; iy < ny; ++iy) {
    auto rng = numerics::keyed_engine(seed, stream, static_cast<std::uint64_t>(iy));
    std::normal_distribution<double> n01;
    for (Eigen::Index ix = 0; ix < nx; ++ix) g(iy, ix) = n01(rng);
  }
  const double sigma_px = corr / pitch;
  if (sigma_px >= 0.3) {
    smooth_rows(g, sigma_px);
    Grid t = g.transpose();
    smooth_rows(t, sigma_px);
    g = t.transpose();
  }
  g.array() -= g.mean();
  const double cur = std::sqrt(g.array().square().mean());
  if (cur > 0.0) g *= rms / cur;
  return g;
}

SyntheticHeight synthetic_height_map(MapRole role, Eigen::Index nx, Eigen::Index ny, double pitch, double rms,
                                     double corr, const SpikeSpec& spikes, std::uint64_t seed) {
  SyntheticHeight out;
  out.map = HeightMap(gaussian_field(nx, ny, pitch, rms, corr, seed, role == MapRole::Sphere ? 1 : 2), pitch, role);
  out.planted = Mask::Constant(ny, nx, false);
  if (spikes.fraction > 0.0) {
    const double area = pitch * pitch * static_cast<double>(nx * ny);
    const double disc = std::numbers::pi * spikes.radius * spikes.radius;
    const int count = std::max(1, static_cast<int>(std::lround(spikes.fraction * area / disc)));
    const int rpx = static_cast<int>(std::ceil(spikes.radius / pitch));
    for (int c = 0; c < count; ++c) {
      auto rng = numerics::keyed_engine(seed, kStreamSpikes, static_cast<std::uint64_t>(c));
      std::uniform_real_distribution<double> ux(0.0, static_cast<double>(nx)), uy(0.0, static_cast<double>(ny));
      std::uniform_real_distribution<double> uh(spikes.height_min, spikes.height_max);
      const double cxp = ux(rng), cyp = uy(rng), height = uh(rng);
      for (int dy = -rpx - 1; dy <= rpx + 1; ++dy)
        for (int dx = -rpx - 1; dx <= rpx + 1; ++dx) {
          const auto ix = static_cast<Eigen::Index>(std::floor(cxp)) + dx;
          const auto iy = static_cast<Eigen::Index>(std::floor(cyp)) + dy;
          const double ddx = (static_cast<double>(ix) - cxp) * pitch, ddy = (static_cast<double>(iy) - cyp) * pitch;
          if (ddx * ddx + ddy * ddy > spikes.radius * spikes.radius) continue;
          const Eigen::Index wx = ((ix % nx) + nx) % nx, wy = ((iy % ny) + ny) % ny;
          if (out.planted(wy, wx)) continue;
          out.planted(wy, wx) = true;
          out.map.z(wy, wx) += spikes.sign * height;
        }
    }
  }
  return out;
}

PotentialMap synthetic_potential_map(Eigen::Index nx, Eigen::Index ny, double pitch, double rms, double corr,
                                     std::uint64_t seed) {
  return PotentialMap(gaussian_field(nx, ny, pitch, rms, corr, seed, 3), pitch);
}

void add_spherical_cap(HeightMap& map, double R, double cx, double cy) {
  for (Eigen::Index iy = 0; iy < map.ny(); ++iy)
    for (Eigen::Index ix = 0; ix < map.nx(); ++ix) {
      const double dx = map.pitch * ix - cx, dy = map.pitch * iy - cy;
      const double rho2 = dx * dx + dy * dy;
      if (rho2 >= R * R) throw ValidationError("add_spherical_cap: map wider than the sphere");
      map.z(iy, ix) -= sag(1.0 / R, rho2);
    }
}

}  // namespace casimir
