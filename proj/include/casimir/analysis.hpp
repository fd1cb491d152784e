#pragma once

#include <string>
#include <vector>

#include "casimir/errors.hpp"
#include "casimir/lifshitz.hpp"
#include "casimir/numerics/stats.hpp"
#include "casimir/records.hpp"

namespace casimir {

class CalibrationQualityError : public ConvergenceError {
 public:
  using ConvergenceError::ConvergenceError;
};

class RangeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Piezo offset from the excitation voltages, which the amplitude feedback
/// keeps proportional to the separation: V = c (a0 - a_pz).
struct A0Fit {
  double a0 = 0.0;
  double sigma_a0 = 0.0;
  double residual_rel = 0.0;  // rms residual over mean |V|
};

/// With drift_rate [m/s] the offset is allowed to move linearly in time and
/// the result refers to the centre point.
A0Fit fit_a0(const SweepRecord& sweep, double max_residual_rel = 0.02, double drift_rate = 0.0);

/// Index of the point at which a0 of a sweep is anchored (number 16 of 34).
std::size_t centre_point(const SweepRecord& sweep);

inline constexpr const char* kReasonDa0 = "DA0_GT_5NM";
inline constexpr const char* kReasonDda0 = "DDA0_GT_3NM";
inline constexpr const char* kReasonA0Fit = "A0_FIT_FAILED";

struct SweepStatus {
  int index = 0;
  double a0 = 0.0;
  double sigma_a0 = 0.0;
  double delta_a0 = 0.0;  // a0(i) - a0(i-1), 0 for the first sweep
  bool accepted = true;
  std::string reason;
};

struct RunSet {
  std::vector<SweepRecord> sweeps;  // ordered by index
  std::vector<SweepStatus> status;
  int accepted() const;
};

struct ScreeningRules {
  double max_delta_a0 = 5e-9;
  double max_delta_delta_a0 = 3e-9;
};

/// Sorts the sweeps and fits a0 for each; failed fits are flagged.
RunSet make_runset(std::vector<SweepRecord> sweeps);

/// Applies the drift rules from scratch (existing drift flags are ignored).
RunSet screen_sweeps(RunSet runset, const ScreeningRules& rules = {});

struct CorrectedPoint {
  int sweep = 0;
  int index = 0;
  double t = 0.0;
  double a = 0.0;
  double sigma_a = 0.0;
  double omega0 = 0.0;  // interpolated free resonance [rad/s]
  double omega = 0.0;   // measured PLL frequency [rad/s]
  double sigma_omega = 0.0;
  double v_ex = 0.0;
  double v_ac = 0.0;
  double sigma_v_ex = 0.0;
  double sigma_v_ac = 0.0;
};

struct DriftOptions {
  double single_sweep_sigma = 2.5e-9;  // added to sigma_a0 when no drift can be interpolated
  int refine_passes = 20;  // max refits of a0 using the spline slope as in-sweep drift rate
  double refine_tolerance = 1e-14;  // [m] largest a0 change that ends the refits
};

/// Natural-spline a0(t) through the accepted sweep centres and omega0(t)
/// through the calibrations; a = a0(t) - a_pz for every accepted point.
/// Each a0 is refitted with the local spline slope before the final spline.
std::vector<CorrectedPoint> interpolate_drift(const RunSet& runset, const DriftOptions& options = {});

struct PipelineCalibration {
  double m = 1.871e-8;
  double sigma_m = 0.036e-8;
  double R = 77.9e-6;
  double sigma_R = 0.8e-6;
  double sigma_omega0 = 0.222;
  double sigma_freq = 0.547;       // used when a point carries no error
  double distance_exponent = 4.0;  // |d ln G / d ln a| for the distance term
};

struct ErrorBudget {
  double radius = 0.0;
  double mass = 0.0;
  double voltages = 0.0;
  double frequency = 0.0;
  double omega0 = 0.0;
  double distance = 0.0;
  double total() const;
};

struct GradientSample {
  int sweep = 0;
  double a = 0.0;
  double sigma_a = 0.0;
  double value = 0.0;  // Casimir gradient [N/m]
  double sigma = 0.0;  // point-to-point part: frequency, omega0, voltages
  ErrorBudget budget;
};

/// Frequency shift to gradient, minus the electrostatic excitation gradient.
std::vector<GradientSample> gradient_pipeline(const std::vector<CorrectedPoint>& points,
                                              const PipelineCalibration& calibration);

/// Mean budget of the samples within 3% of a_target.
ErrorBudget error_budget(const std::vector<GradientSample>& samples, double a_target = 100e-9);

struct CurvePoint {
  double x = 0.0;
  double sx = 0.0;
  double y = 0.0;
  double sy = 0.0;
  int group = 0;  // sweep identity, used for scatter-based errors
};

struct AveragedCurve {
  std::vector<double> a;
  std::vector<double> value;
  std::vector<double> sigma;
  std::vector<double> sigma_a;
  int width = 1;
  int exact_points = 0;  // windows containing zero-sigma points
  std::vector<CurvePoint> source;  // input points, when known
};

/// Running mean over `width` neighbouring points in x, weighted by 1/sigma^2
/// separately in x and y.
AveragedCurve weighted_running_mean(std::vector<CurvePoint> points, int width);

std::vector<CurvePoint> curve_points(const std::vector<GradientSample>& samples, int group_offset = 0);

struct ReductionReport {
  std::vector<double> a;
  std::vector<double> delta;
  std::vector<double> sigma;
  Window window;
  double window_mean = 0.0;
  double window_sigma = 0.0;
  int window_points = 0;
  int sample_groups = 0;
  int reference_groups = 0;
  numerics::Histogram histogram;
};

/// Delta(a) = sample / reference - 1 with its window mean and histogram.
ReductionReport relative_reduction(const AveragedCurve& sample, const AveragedCurve& reference, Window window = {});

struct RunAnalysis {
  RunSet runset;
  std::vector<CorrectedPoint> points;
  std::vector<GradientSample> samples;
};

RunAnalysis analyze_run(std::vector<SweepRecord> sweeps, const PipelineCalibration& calibration,
                        const ScreeningRules& rules = {}, const DriftOptions& drift = {});

/// Pools several analysed runs (e.g. repeated references) into one curve; the
/// width defaults to the total number of accepted sweeps.
AveragedCurve pooled_curve(const std::vector<RunAnalysis>& runs, int width = 0);

}  // namespace casimir
