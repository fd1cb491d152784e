#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "casimir/errors.hpp"
#include "casimir/records.hpp"

namespace casimir {

using Complex = std::complex<double>;

/// Lumped cantilever: mass m, spring k = m omega0^2, base damping gamma1 and
/// squeeze-film damping gamma0(a) = C a^-n towards the plate.
struct CantileverParams {
  double m = 0.0;
  double k = 0.0;
  double omega0 = 0.0;
  double gamma1 = 0.0;
  double gamma0_C = 0.0;
  double gamma0_n = 1.0;

  /// k is derived from m and omega0.
  static CantileverParams make(double m, double omega0, double gamma1, double gamma0_C, double gamma0_n = 1.0);
  /// 77.9 um sphere in air on the reference cantilever.
  static CantileverParams defaults();

  double gamma0(double a) const;
  double dgamma0_da(double a) const;
  void validate() const;
};

inline constexpr double kDefaultSphereRadius = 77.9e-6;
inline constexpr double kAirViscosity = 1.81e-5;  // [Pa s]

class PullInError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// The resonance is not inside the searched or swept range.
class BracketError : public ConvergenceError {
 public:
  using ConvergenceError::ConvergenceError;
};

/// dF/da = m [omega0^2 - (omega0 + delta_omega)^2].
double gradient_from_shift(double m, double omega0, double delta_omega);
/// Inverse of gradient_from_shift; PullInError once dF/da >= m omega0^2.
double shift_from_gradient(double m, double omega0, double dFda);

/// Gradient of the sphere-plate electrostatic force for a mean-square voltage v_sq.
double electrostatic_gradient(double a, double v_sq, double R);

/// Calibration response (F_ES T_Fx) for excitation voltages V_ex, V_AC.
Complex electrostatic_response(double a, double v_ex, double v_ac, double omega, const CantileverParams& p, double R,
                               std::optional<double> gamma = std::nullopt);

enum class Source { F, X0, X1 };

/// Small-signal source amplitudes F [N], X0, X1 [m].
struct SourceAmplitudes {
  double F = 0.0;
  double X0 = 0.0;
  double X1 = 0.0;
  double& operator[](Source s) { return s == Source::F ? F : (s == Source::X0 ? X0 : X1); }
  double operator[](Source s) const { return s == Source::F ? F : (s == Source::X0 ? X0 : X1); }
};

struct ExcitationConfig {
  Source source = Source::F;
  double amplitude = 0.0;
  double omega = 0.0;
  double v_ex = 0.0;
  double v_ac = 0.0;
  double v_dc = 0.0;

  SourceAmplitudes amplitudes() const;
  void validate() const;
};

/// Separation-dependent terms entering the equation of motion.
struct LocalTerms {
  double df = 0.0;       // d f / d a of the static force [N/m]
  double gamma0 = 0.0;   // [kg/s]
  double dgamma0 = 0.0;  // d gamma0 / d a [kg/(m s)]

  static LocalTerms at(const CantileverParams& p, double a, double df);
};

/// Relative motion Y(omega) of the driven cantilever.
Complex eom_response(double omega, const CantileverParams& p, const SourceAmplitudes& s, const LocalTerms& t);

/// dY/dB at B = 0 with the other sources held at s.
Complex transfer_function(Source b, double omega, const CantileverParams& p, const SourceAmplitudes& s,
                          const LocalTerms& t);

struct ResonancePhase {
  double omega_res = 0.0;  // root of Re D_B
  double phi_res = 0.0;    // Arg of the transfer function there, in (-pi, pi]
  int iterations = 0;
  std::optional<double> re_y_root;  // root of Re Y_B nearest omega_res, when bracketed
};

/// Resonance from the sign change of the real part of the resonant
/// denominator, searched in [omega_lo, omega_hi] (default spans it).
ResonancePhase resonance_and_phase(Source b, const CantileverParams& p, const SourceAmplitudes& s,
                                   const LocalTerms& t, std::optional<std::pair<double, double>> bracket = {});

/// Closed forms at the resonance sqrt((k - df)/m).
double resonance_closed_form(const CantileverParams& p, const LocalTerms& t);
double phase_closed_form(Source b, const CantileverParams& p, const SourceAmplitudes& s, const LocalTerms& t);
/// Single-source limits atan(df m / (gamma0 w m)) and atan(k m / (gamma0 w m)), w m = sqrt(m (k - df)).
double phase_single_source_limit(Source b, const CantileverParams& p, const LocalTerms& t);

// ---------------------------------------------------------------------------
// Calibration

struct FrequencySweep {
  std::vector<double> omega;
  std::vector<Complex> response;
  std::vector<double> phase;  // unwrapped [rad]
};

struct CalibrationSetup {
  double a = 2.5e-6;
  double v_ex = 1.0;
  double v_ac = 0.0;
  double R = kDefaultSphereRadius;
};

FrequencySweep calibration_sweep(const std::vector<double>& omega, const CantileverParams& p,
                                 const CalibrationSetup& setup, double phi_off, double gamma, double phase_noise = 0.0,
                                 std::uint64_t seed = 0);

struct Omega0Fit {
  double omega0 = 0.0;
  double phi_off = 0.0;
  double gamma = 0.0;
  double residual_rms = 0.0;
  bool converged = false;
};

Omega0Fit calibrate_omega0(const FrequencySweep& sweep, const CantileverParams& initial, const CalibrationSetup& setup,
                           std::optional<double> gamma_initial = std::nullopt);

struct MassFit {
  double m = 0.0;
  double v0 = 0.0;
  double omega_off = 0.0;
  double sigma_m = 0.0;
  bool converged = false;
};

/// Fits delta_omega(V_DC) = shift_from_gradient(m, omega0, grad(a, (V_DC - V0)^2)) + omega_off.
MassFit calibrate_mass(const std::vector<std::pair<double, double>>& parabola, double a, double omega0,
                       double R = kDefaultSphereRadius);

// ---------------------------------------------------------------------------
// Sweep simulator

struct SweepPlan {
  int sweeps = 35;
  int points = 34;
  double a_start = 500e-9;
  double a_end = 70e-9;
  double a0 = 1.0e-6;          // piezo offset, a = a0 - a_pz
  double run_duration = 48.0 * 3600.0;
  double v_ref = 0.02;         // V_ex = V_AC at a_ref; both scale with a
  double a_ref = 100e-9;
};

struct NoiseModel {
  double sigma_freq = 0.547;         // white PLL frequency noise [rad/s]
  double sigma_omega0 = 0.222;       // per-calibration error [rad/s]
  double omega0_drift_span = 0.0;    // bound on the omega0 random walk [rad/s]
  double sigma_a_pz = 0.15e-9;       // piezo read-out noise [m]
  double sigma_v_rel = 1e-5;         // relative voltage noise
  double a0_drift_per_sweep = 0.0;   // linear drift [m/sweep]
  double a0_walk = 0.0;              // random-walk step per sweep [m]
  std::vector<std::pair<int, double>> a0_jumps;  // (sweep, step [m]) applied from that sweep on
};

struct SimulatedRun {
  std::vector<SweepRecord> sweeps;
  std::vector<double> omega0_true;  // per sweep, at calibration time
};

/// Synthetic distance sweeps for a true gradient law G(a) [N/m].
SimulatedRun simulate_run(const std::function<double(double)>& law, const CantileverParams& p, const SweepPlan& plan,
                          const NoiseModel& noise, std::uint64_t seed, double R = kDefaultSphereRadius);

/// Nominal piezo positions for the plan (log-spaced separations).
std::vector<double> plan_separations(const SweepPlan& plan);

}  // namespace casimir
