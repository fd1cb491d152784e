#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "casimir/errors.hpp"
#include "casimir/lifshitz.hpp"
#include "casimir/numerics/spline.hpp"

namespace casimir {

enum class MapRole { Sphere, Plate };

using Grid = Eigen::MatrixXd;               // rows = y, cols = x
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Gridded topography. `origin` is the lateral position [m] taken as the
/// closest-approach point (map centre unless set by fit_sphere).
struct HeightMap {
  Grid z;
  double pitch = 0.0;
  MapRole role = MapRole::Plate;
  Mask valid;  // empty means every pixel is usable
  double origin_x = 0.0;
  double origin_y = 0.0;

  HeightMap() = default;
  HeightMap(Grid heights, double pitch_m, MapRole r);

  Eigen::Index nx() const { return z.cols(); }
  Eigen::Index ny() const { return z.rows(); }
  double side_x() const { return pitch * static_cast<double>(nx()); }
  double side_y() const { return pitch * static_cast<double>(ny()); }
  bool is_valid(Eigen::Index iy, Eigen::Index ix) const { return valid.size() == 0 || valid(iy, ix); }
  void validate() const;
};

struct PotentialMap {
  Grid v;
  double pitch = 0.0;

  PotentialMap() = default;
  PotentialMap(Grid values, double pitch_m);
  Eigen::Index nx() const { return v.cols(); }
  Eigen::Index ny() const { return v.rows(); }
  void validate() const;
};

struct SurfaceStats {
  double rms = 0.0;  // about the mean
  double peak_peak = 0.0;
  double mean = 0.0;
};

template <class Derived>
SurfaceStats surface_stats(const Eigen::DenseBase<Derived>& values) {
  if (values.size() == 0) throw ValidationError("surface_stats: empty grid");
  const double mean = values.mean();
  const double rms = std::sqrt((values.derived().array() - mean).square().mean());
  return {rms, values.maxCoeff() - values.minCoeff(), mean};
}

/// Statistics over usable pixels only.
SurfaceStats surface_stats(const HeightMap& map);
SurfaceStats surface_stats(const PotentialMap& map);

struct SphereFit {
  double radius = 0.0;  // +inf when degenerate
  double center_x = 0.0;
  double center_y = 0.0;
  double apex = 0.0;  // height of the apex [m]
  bool degenerate = false;
  bool converged = false;
  double residual_rms = 0.0;
  HeightMap residual;  // cap removed, origin at the fitted apex
};

/// Least-squares spherical cap z = apex - (R - sqrt(R^2 - rho^2)).
SphereFit fit_sphere(const HeightMap& map);

struct PeakReport {
  HeightMap map;  // median removed, pixels above cutoff marked invalid
  double masked_fraction = 0.0;
  bool quality_warning = false;  // more than 20% masked
};

inline constexpr double kDefaultPeakCutoff = 30e-9;

PeakReport preprocess_peaks(const HeightMap& map, double cutoff = kDefaultPeakCutoff);

/// Smooth-surface gradient law G(h) [N/m] and its derivative, as a natural
/// cubic spline of ln G against ln h (power-law continuation outside).
class GradientLaw {
 public:
  GradientLaw() = default;
  GradientLaw(const std::vector<double>& h, const std::vector<double>& g);

  static GradientLaw from_lifshitz(const MaterialAssignment& materials, const LifshitzConfig& config,
                                   double h_min = 10e-9, double h_max = 2e-6, int samples = 48);
  static GradientLaw power_law(double g0, double h0, double exponent);

  double operator()(double h) const;
  double derivative(double h) const;

 private:
  numerics::NaturalCubicSpline spline_;
};

struct ShiftLog {
  int index = 0;
  double x = 0.0;
  double y = 0.0;
  bool accepted = false;
  double min_gap = 0.0;
  std::string reason;
};

struct CorrectionResult {
  std::vector<double> a_grid;
  std::vector<double> eta;
  std::vector<double> band_lo;
  std::vector<double> band_hi;
  int n_accepted = 0;
  int n_attempts = 0;
  std::vector<ShiftLog> log;
  // Patch runs only: additive gradient [N/m] with its band.
  std::vector<double> gradient;
  std::vector<double> gradient_lo;
  std::vector<double> gradient_hi;
  std::string note;
};

class SamplingExhaustedError : public ConvergenceError {
 public:
  SamplingExhaustedError(const std::string& what, CorrectionResult partial)
      : ConvergenceError(what), partial_(std::move(partial)) {}
  const CorrectionResult& partial() const { return partial_; }

 private:
  CorrectionResult partial_;
};

class GeometryError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct RoughnessOptions {
  int n_mc = 100;
  int max_attempts = 0;  // 0 -> 20 * n_mc
  std::uint64_t seed = 0;
  double min_gap = 30e-9;
  int radial_nodes = 96;
  int angular_nodes = 128;
  double t_min = 0.1;  // a / h at the rim, about 3 sqrt(2 a R) laterally
};

/// Polar quadrature nodes around closest approach for the separation a.
struct PolarNodes {
  Eigen::VectorXd rho;      // lateral radius [m]
  Eigen::VectorXd u;        // sphere sag R - sqrt(R^2 - rho^2) [m]
  Eigen::VectorXd weight;   // area weight per radial node [m^2 / rad]
  Eigen::VectorXd cos_phi;  // angular nodes
  Eigen::VectorXd sin_phi;
  double dphi = 0.0;
};

PolarNodes polar_nodes(double a, double R, int radial, int angular, double t_min);

/// Bilinear sample of a map, periodic (tiled) or zero outside.
double sample_bilinear(const HeightMap& map, double x, double y, bool periodic);
double sample_bilinear(const PotentialMap& map, double x, double y, bool periodic);

/// eta for one lateral plate shift (no rejection rule applied); also
/// returns the smallest local gap through min_gap when non-null.
double roughness_eta_single(double a, const HeightMap& sphere, const HeightMap& plate, double R,
                            const GradientLaw& law, double shift_x, double shift_y, const RoughnessOptions& opt,
                            double* min_gap = nullptr);

/// Monte-Carlo roughness factor. sphere is the residual map (cap removed).
CorrectionResult roughness_eta(const std::vector<double>& a_grid, const HeightMap& sphere, const HeightMap& plate,
                               double R, const GradientLaw& law, const RoughnessOptions& options = {});

struct PatchOptions {
  int n_mc = 100;
  int max_attempts = 0;  // 0 -> 20 * n_mc
  std::uint64_t seed = 0;
  int radial_nodes = 128;
  int angular_nodes = 128;
  double t_min = 0.01;
  double step = 1e-3;  // relative central-difference step in a
  bool force_v0_zero = false;
  double outlier_mad_factor = 5.0;
  double outlier_floor = 1e-6;  // relative floor on the MAD
};

/// Local-capacitor energy W(a) = eps0/2 Int (dV - V0)^2 / h dA for one
/// position, and its second derivative (the additive gradient).
struct PatchSample {
  double energy = 0.0;
  double gradient = 0.0;
  double v0 = 0.0;
};

PatchSample patch_single(double a, const PotentialMap& sphere, const PotentialMap& plate, double R, double shift_x,
                         double shift_y, const PatchOptions& opt);

/// Monte-Carlo patch correction. eta = 1 + G_patch / G_C when a law is given.
CorrectionResult patch_gradient(const std::vector<double>& a_grid, const PotentialMap& sphere,
                                const PotentialMap& plate, double R, const PatchOptions& options = {},
                                const std::optional<GradientLaw>& law = std::nullopt);

struct CombinedReduction {
  std::vector<double> a;
  std::vector<double> delta;
  std::vector<double> delta_lo;  // lower edge of the band
  std::vector<double> delta_hi;
};

/// Delta = (G_B/G_A)(eta_rough_B/eta_rough_A)(eta_patch_B/eta_patch_A) - 1.
CombinedReduction combine_corrections(const std::vector<GradientPoint>& grad_a,
                                      const std::vector<GradientPoint>& grad_b, const CorrectionResult& rough_a,
                                      const CorrectionResult& rough_b, const CorrectionResult& patch_a,
                                      const CorrectionResult& patch_b);

/// Flat correction (eta = 1, zero band) on the given grid.
CorrectionResult unit_correction(const std::vector<double>& a_grid);

// ---------------------------------------------------------------------------
// Synthetic maps

struct SpikeSpec {
  double fraction = 0.0;      // areal coverage of the planted clusters
  double height_min = 40e-9;  // flat-top cluster heights drawn uniformly
  double height_max = 100e-9;
  double radius = 100e-9;     // cluster radius [m]
  double sign = 1.0;          // -1 plants holes
};

/// Periodic Gaussian random field with the given rms and correlation length.
Grid gaussian_field(Eigen::Index nx, Eigen::Index ny, double pitch, double rms, double correlation_length,
                    std::uint64_t seed, std::uint64_t stream);

struct SyntheticHeight {
  HeightMap map;
  Mask planted;  // pixels covered by planted clusters
};

SyntheticHeight synthetic_height_map(MapRole role, Eigen::Index nx, Eigen::Index ny, double pitch, double rms,
                                     double correlation_length, const SpikeSpec& spikes, std::uint64_t seed);

PotentialMap synthetic_potential_map(Eigen::Index nx, Eigen::Index ny, double pitch, double rms,
                                     double correlation_length, std::uint64_t seed);

/// Adds a spherical cap of radius R with apex at (cx, cy) [m].
void add_spherical_cap(HeightMap& map, double R, double cx, double cy);

}  // namespace casimir
