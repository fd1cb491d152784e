#pragma once

#include <optional>
#include <vector>

namespace casimir {

inline constexpr int kSweepRecordVersion = 1;

/// One position of a distance sweep as recorded by the instrument.
struct SweepPoint {
  double a_pz = 0.0;         // calibrated piezo position [m]
  double delta_omega = 0.0;  // PLL frequency relative to the sweep's omega0_cal [rad/s]
  double v_ac = 0.0;         // [V]
  double v_ex = 0.0;         // [V]
  double t = 0.0;            // [s]
  double sigma_delta_omega = 0.0;
  double sigma_v_ac = 0.0;
  double sigma_v_ex = 0.0;
  double sigma_a_pz = 0.0;
};

struct SweepRecord {
  int version = kSweepRecordVersion;
  int index = 0;
  double omega0_cal = 0.0;  // free resonance measured before the sweep [rad/s]
  double t_cal = 0.0;       // time of that calibration [s]
  std::vector<SweepPoint> points;
  bool truncated = false;   // pull-in ended the sweep early
  std::optional<double> a0_true;  // simulator only, at the centre point
};

}  // namespace casimir
