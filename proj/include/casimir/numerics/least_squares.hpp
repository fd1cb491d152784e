#pragma once

#include <Eigen/Dense>

#include <functional>

namespace casimir::numerics {

/// Fills the residual vector and, when the pointer is non-null, the Jacobian
/// d(residual_i)/d(x_j). Residual size must not change between calls.
using ResidualFunction =
    std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& residual, Eigen::MatrixXd* jacobian)>;

struct LevenbergMarquardtOptions {
  int max_iterations = 200;
  double initial_lambda = 1e-3;
  double cost_tolerance = 1e-14;   // relative decrease that counts as stalled
  double step_tolerance = 1e-12;   // relative parameter step
  double gradient_tolerance = 1e-14;
  bool numeric_jacobian = false;   // forward differences instead of the callback's Jacobian
  double fd_step = 1e-7;
};

struct LevenbergMarquardtResult {
  Eigen::VectorXd x;
  double cost = 0.0;  // 0.5 * |r|^2
  int iterations = 0;
  bool converged = false;
  Eigen::MatrixXd jacobian;  // at the solution
  Eigen::VectorXd residual;
};

/// Damped Gauss-Newton with Marquardt diagonal scaling.
LevenbergMarquardtResult levenberg_marquardt(const ResidualFunction& fn, Eigen::VectorXd x0,
                                             const LevenbergMarquardtOptions& options = {});

/// Parameter covariance s^2 (J^T J)^-1 with s^2 = |r|^2 / (m - n).
Eigen::MatrixXd covariance(const LevenbergMarquardtResult& fit);

struct LinearFit {
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd covariance;
  double residual_rms = 0.0;
};

/// Ordinary least squares for design * coeffs ~ rhs, via QR.
LinearFit linear_least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& rhs);

}  // namespace casimir::numerics
