#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "casimir/errors.hpp"

namespace casimir {

struct OscillatorTerm {
  double omega = 0.0;     // resonance [s^-1]
  double strength = 0.0;  // xi_j [s^-2], sign unconstrained
  double gamma = 0.0;     // damping [s^-1], sign unconstrained
};

/// Drude term plus Lorentz oscillators. omega_p == 0 means "no Drude term"
/// (insulators and fitted vacuum-like spectra); tau_D is then ignored.
struct DrudeLorentzModel {
  double omega_p = 0.0;
  double tau_D = 1.0;
  std::vector<OscillatorTerm> oscillators;

  bool is_metal() const { return omega_p > 0.0; }
  void validate() const;
};

enum class Provenance { Measured, Literature };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct SpectrumPoint {
  double omega = 0.0;
  double eps_real = 0.0;
  double eps_imag = 0.0;
  Provenance provenance = Provenance::Measured;
};

struct TabulatedSpectrum {
  std::vector<SpectrumPoint> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  double omega_min() const { return points.front().omega; }
  double omega_max() const { return points.back().omega; }
  /// Strictly increasing omega; nonnegative eps_imag on measured points.
  void validate() const;
};

struct EllipsometricPoint {
  double wavelength = 0.0;  // [m]
  double psi = 0.0;         // [rad]
  double delta = 0.0;       // [rad]
  double phi = 0.0;         // incidence angle [rad]
};

/// Raised when a real-axis evaluation lands on an oscillator pole.
class PoleError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Raised by kk_transform when the spectrum does not span enough decades
/// or the requested xi lies outside the supported window.
class CoverageError : public ValidationError {
 public:
  CoverageError(const std::string& what, std::vector<double> missing_decades)
      : ValidationError(what), missing_decades_(std::move(missing_decades)) {}
  const std::vector<double>& missing_decades() const { return missing_decades_; }

 private:
  std::vector<double> missing_decades_;  // log10 of omega at the start of each missing decade
};

class GapError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Complex permittivity on the real axis. Scalar may be double or
/// std::complex<double>; the latter gives the analytic continuation.
template <class Scalar>
std::complex<double> eval_real_axis(const DrudeLorentzModel& model, Scalar omega) {
  using C = std::complex<double>;
  const C w(omega);
  const C i(0.0, 1.0);
  C eps(1.0, 0.0);
  if (model.omega_p > 0.0) {
    const C den = w * (w + i / model.tau_D);
    if (std::abs(den) == 0.0) throw PoleError("eval_real_axis: Drude pole at omega = 0");
    eps -= model.omega_p * model.omega_p / den;
  }
  for (const auto& osc : model.oscillators) {
    const C den = osc.omega * osc.omega - i * w * osc.gamma - w * w;
    const double scale = osc.omega * osc.omega + std::norm(w);
    if (std::abs(den) <= 64.0 * std::numeric_limits<double>::epsilon() * scale)
      throw PoleError("eval_real_axis: omega within rounding of an oscillator pole at " +
                      std::to_string(osc.omega));
    eps += osc.strength / den;
  }
  return eps;
}

/// eps(i xi) from direct substitution omega -> i xi. Returns +infinity at
/// xi = 0 for Drude metals; that value is consumed only by the static
/// reflection limits.
double eval_imag_axis(const DrudeLorentzModel& model, double xi);

/// Imaginary-axis permittivity obtained from the Kramers-Kronig transform
/// of the model's real-axis loss. Identical to eval_imag_axis when all
/// gamma_j >= 0; for negative gamma_j it removes the spurious poles that
/// direct substitution produces.
double eval_imag_axis_causal(const DrudeLorentzModel& model, double xi);

/// Throws ValidationError naming the first xi where eps(i xi) <= 1.
void validate_imag_axis(const DrudeLorentzModel& model, const std::vector<double>& xi, bool causal);

/// Log-spaced samples of xi over [xi_min, xi_max] used for construction checks.
std::vector<double> validation_grid(double xi_min = 1e11, double xi_max = 1e18, int per_decade = 50);

TabulatedSpectrum tabulate_model(const DrudeLorentzModel& model, double omega_min, double omega_max,
                                 int points_per_decade, Provenance provenance = Provenance::Literature);

struct KKOptions {
  double min_decades = 6.0;
  int gauss_points = 4;  // per tabulation interval
};

/// eps(i xi) = 1 + (2/pi) Int omega eps''(omega) / (omega^2 + xi^2) d omega.
/// Inside the table eps'' is linear in ln(omega). Below the table a Drude
/// tail fitted to the first point is used (zero if that point has eps' >= 1);
/// above it eps'' decays as omega^-3 from the last point.
double kk_transform(const TabulatedSpectrum& spectrum, double xi, const KKOptions& options = {});

/// Effective single-layer conversion of ellipsometric angles.
std::complex<double> ellipsometry_to_epsilon(const EllipsometricPoint& point);

struct FitOptions {
  int max_iterations = 400;
  int multistart = 8;
  std::uint64_t seed = 0;
  double perturbation = 0.1;  // relative spread of perturbed starts
};

struct FitReport {
  DrudeLorentzModel model;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  bool boundary = false;  // Drude term collapsed towards omega_p -> 0
  std::vector<int> collapsed;  // oscillators whose resonance left the data range by > 2 decades
  int starts = 0;
  int residual_count = 0;
  std::string weighting;  // recorded weighting of the eps' and eps'' blocks
  Eigen::VectorXd parameters;  // [omega_p, tau_D, (omega_j, xi_j, gamma_j)...]
};

/// Joint least-squares fit of asinh(eps') and ln(eps'') against the model.
/// Runs the initial guess plus (multistart - 1) perturbed copies and keeps the best.
FitReport fit_model(const TabulatedSpectrum& spectrum, int n_oscillators,
                    const std::optional<DrudeLorentzModel>& initial = std::nullopt,
                    const FitOptions& options = {});

inline constexpr double kDefaultCrossover = 7.53e15;

TabulatedSpectrum merge_with_literature(const TabulatedSpectrum& measured, const TabulatedSpectrum& literature,
                                        double crossover_omega = kDefaultCrossover);

/// Parses the plain-text columnar model format shipped in data/.
DrudeLorentzModel parse_model_table(std::string_view text);

/// Bundled tables. The returned models are validated on the causal
/// continuation over [1e11, 1e18] s^-1.
const DrudeLorentzModel& bundled_au();
const DrudeLorentzModel& bundled_psi();
std::string_view bundled_table_text(std::string_view name);

}  // namespace casimir
