#pragma once

#include <Eigen/Dense>

namespace casimir::numerics {

/// Natural cubic spline through (x_i, y_i) with strictly increasing x.
/// Outside the knot range the spline continues linearly, which is the
/// natural end condition extended (zero curvature at the ends).
class NaturalCubicSpline {
 public:
  NaturalCubicSpline() = default;
  NaturalCubicSpline(Eigen::VectorXd x, Eigen::VectorXd y);

  double operator()(double x) const;
  double derivative(double x) const;

  const Eigen::VectorXd& knots() const { return x_; }
  const Eigen::VectorXd& values() const { return y_; }
  bool empty() const { return x_.size() == 0; }

 private:
  Eigen::Index segment(double x) const;

  Eigen::VectorXd x_;
  Eigen::VectorXd y_;
  Eigen::VectorXd second_;  // second derivatives at the knots
};

}  // namespace casimir::numerics
