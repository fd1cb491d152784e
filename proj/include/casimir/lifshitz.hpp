#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "casimir/dielectric.hpp"
#include "casimir/errors.hpp"

namespace casimir {

/// Zero-frequency behaviour of a half-space, used for the n = 0 term.
enum class StaticLimit { DrudeMetal, Dielectric, PerfectConductor, Vacuum };

/// Gap-side reflection coefficients of a half-space at xi -> 0.
struct StaticReflection {
  double tm = 0.0;
  double te = 0.0;
};

/// eps(i xi) of one body for xi > 0, plus its static limit.
class DielectricSource {
 public:
  using Function = std::function<double(double)>;

  DielectricSource(std::string name, Function eps, StaticLimit limit, double static_eps = 1.0);

  /// eps(i xi) via direct substitution into the model.
  static DielectricSource model_direct(const DrudeLorentzModel& model, std::string name = "model");
  /// Closed-form causal continuation (see eval_imag_axis_causal).
  static DielectricSource model_causal(const DrudeLorentzModel& model, std::string name = "model");
  /// Tabulates the model on the real axis and Kramers-Kronig transforms the loss.
  static DielectricSource model_kk(const DrudeLorentzModel& model, std::string name = "model",
                                   int points_per_decade = 400);
  /// Kramers-Kronig of a tabulated spectrum. The static limit is guessed from
  /// the lowest point unless given.
  static DielectricSource spectrum(TabulatedSpectrum s, std::string name = "spectrum",
                                   std::optional<StaticLimit> limit = std::nullopt);
  static DielectricSource perfect_conductor();
  static DielectricSource vacuum();
  static DielectricSource constant(double eps);

  double operator()(double xi) const { return eps_(xi); }
  StaticLimit static_limit() const { return limit_; }
  double static_epsilon() const { return static_eps_; }
  StaticReflection static_reflection() const;
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  Function eps_;
  StaticLimit limit_;
  double static_eps_;
};

struct PlateFilm {
  DielectricSource film;
  double thickness = 0.0;  // [m]
};

/// plate = medium 1, gap = vacuum (medium 2), sphere = medium 3; mu = 1.
struct MaterialAssignment {
  DielectricSource plate;
  DielectricSource sphere;
  std::optional<PlateFilm> plate_film;
};

struct LifshitzConfig {
  double temperature = 296.0;     // [K]
  double sphere_radius = 77.9e-6; // [m]
  double matsubara_tolerance = 1e-8;
  double quadrature_tolerance = 1e-9;
  int max_terms = 200000;
  bool zero_temperature = false;  // replace the Matsubara sum by its T -> 0 integral
  bool include_zero_term = true;  // bookkeeping switch for the n = 0 contribution

  void validate() const;
};

struct MatsubaraGrid {
  double temperature = 0.0;
  std::vector<double> xi;

  static double frequency(int n, double temperature);
  static MatsubaraGrid build(double temperature, int count);
};

template <class Scalar>
Scalar kappa(Scalar p, Scalar eps) {
  using std::sqrt;
  return sqrt(p * p - Scalar(1) + eps);
}

/// r_TM^(m,m') = (eps_m k_m' - eps_m' k_m)/(eps_m k_m' + eps_m' k_m). Infinite
/// permittivities are treated as the perfect-conductor limit.
template <class Scalar>
Scalar fresnel_tm(Scalar p, Scalar eps_m, Scalar eps_mp) {
  if constexpr (std::is_floating_point_v<Scalar>) {
    const bool inf_m = std::isinf(eps_m), inf_mp = std::isinf(eps_mp);
    if (inf_m && inf_mp) return Scalar(0);
    if (inf_m) return Scalar(1);
    if (inf_mp) return Scalar(-1);
  }
  const Scalar k_m = kappa(p, eps_m), k_mp = kappa(p, eps_mp);
  return (eps_m * k_mp - eps_mp * k_m) / (eps_m * k_mp + eps_mp * k_m);
}

/// r_TE^(m,m') = (k_m' - k_m)/(k_m' + k_m) for non-magnetic media.
template <class Scalar>
Scalar fresnel_te(Scalar p, Scalar eps_m, Scalar eps_mp) {
  if constexpr (std::is_floating_point_v<Scalar>) {
    const bool inf_m = std::isinf(eps_m), inf_mp = std::isinf(eps_mp);
    if (inf_m && inf_mp) return Scalar(0);
    if (inf_m) return Scalar(-1);
    if (inf_mp) return Scalar(1);
  }
  const Scalar k_m = kappa(p, eps_m), k_mp = kappa(p, eps_mp);
  return (k_mp - k_m) / (k_mp + k_m);
}

struct Reflection {
  double tm = 0.0;
  double te = 0.0;
};

/// Gap-side reflection of a film (thickness d) on a substrate.
Reflection layered_reflection(double film_eps, double substrate_eps, double d, double p, double xi);

class MatsubaraConvergenceError : public ConvergenceError {
 public:
  MatsubaraConvergenceError(const std::string& what, double partial, double tail)
      : ConvergenceError(what), partial_sum_(partial), tail_estimate_(tail) {}
  double partial_sum() const { return partial_sum_; }
  double tail_estimate() const { return tail_estimate_; }

 private:
  double partial_sum_;
  double tail_estimate_;
};

struct GradientValue {
  double value = 0.0;    // dF/da [N/m], attractive positive
  double rel_err = 0.0;  // truncation plus quadrature estimate
  int terms = 0;         // Matsubara terms used (outer evaluations in zero-T mode)
};

/// Permittivities of every body tabulated on a Matsubara grid; reused
/// across separations so each source is evaluated once per frequency.
class EpsilonCache {
 public:
  EpsilonCache(const MaterialAssignment& materials, double temperature);
  /// eps of plate, sphere and film at xi_n, extending the cache on demand.
  const std::array<double, 3>& at(int n);
  double xi(int n) const { return MatsubaraGrid::frequency(n, temperature_); }

 private:
  const MaterialAssignment* materials_;
  double temperature_;
  std::vector<std::array<double, 3>> values_;
};

inline constexpr double kMinSeparation = 10e-9;
inline constexpr double kMaxSeparation = 10e-6;

GradientValue gradient_pfa(double a, const MaterialAssignment& materials, const LifshitzConfig& config);
GradientValue gradient_pfa(double a, const MaterialAssignment& materials, const LifshitzConfig& config,
                           EpsilonCache& cache);

/// Unweighted n = 0 Matsubara contribution to the gradient [N/m].
double zero_frequency_term(double a, const MaterialAssignment& materials, const LifshitzConfig& config);

struct GradientPoint {
  double a = 0.0;
  double value = 0.0;
  double rel_err = 0.0;
};

std::vector<GradientPoint> gradient_curve(const std::vector<double>& a_grid, const MaterialAssignment& materials,
                                          const LifshitzConfig& config);

struct Window {
  double lo = 80e-9;
  double hi = 120e-9;
};

struct ReductionCurve {
  std::vector<double> a;
  std::vector<double> grad_a;
  std::vector<double> grad_b;
  std::vector<double> delta;
  Window window;
  double window_mean = 0.0;
  int window_points = 0;
};

/// Trapezoid-weighted mean of y(x) over the grid points inside the window.
double window_mean(const std::vector<double>& x, const std::vector<double>& y, Window w, int* count = nullptr);

ReductionCurve reduction_curve(const std::vector<double>& a_grid, const MaterialAssignment& materials_a,
                               const MaterialAssignment& materials_b, const LifshitzConfig& config,
                               Window window = {});

/// Polylogarithm Li_3(x) for |x| <= 1.
double polylog3(double x);

}  // namespace casimir
