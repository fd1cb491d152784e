#include "casimir/numerics/spline.hpp"

#include "casimir/errors.hpp"

#include <algorithm>

namespace casimir::numerics {

NaturalCubicSpline::NaturalCubicSpline(Eigen::VectorXd x, Eigen::VectorXd y)
    : x_(std::move(x)), y_(std::move(y)) {
  const Eigen::Index n = x_.size();
  if (n != y_.size() || n < 1) throw ValidationError("spline: knot/value size mismatch");
  for (Eigen::Index i = 1; i < n; ++i)
    if (!(x_[i] > x_[i - 1])) throw ValidationError("spline: knots must be strictly increasing");
  second_ = Eigen::VectorXd::Zero(n);
  if (n < 3) return;
  // Tridiagonal system for interior second derivatives (Thomas algorithm).
  const Eigen::Index m = n - 2;
  Eigen::VectorXd diag(m), upper(m), rhs(m);
  for (Eigen::Index i = 1; i <= m; ++i) {
    const double h0 = x_[i] - x_[i - 1];
    const double h1 = x_[i + 1] - x_[i];
    diag[i - 1] = 2.0 * (h0 + h1);
    upper[i - 1] = h1;
    rhs[i - 1] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
  }
  for (Eigen::Index i = 1; i < m; ++i) {
    const double lower = x_[i + 1] - x_[i];
    const double f = lower / diag[i - 1];
    diag[i] -= f * upper[i - 1];
    rhs[i] -= f * rhs[i - 1];
  }
  second_[m] = rhs[m - 1] / diag[m - 1];
  for (Eigen::Index i = m - 2; i >= 0; --i) second_[i + 1] = (rhs[i] - upper[i] * second_[i + 2]) / diag[i];
}

Eigen::Index NaturalCubicSpline::segment(double x) const {
  const auto* begin = x_.data();
  const auto* end = begin + x_.size();
  auto it = std::upper_bound(begin, end, x);
  Eigen::Index i = static_cast<Eigen::Index>(it - begin) - 1;
  return std::clamp<Eigen::Index>(i, 0, x_.size() - 2);
}

double NaturalCubicSpline::operator()(double x) const {
  const Eigen::Index n = x_.size();
  if (n == 1) return y_[0];
  if (x <= x_[0]) return y_[0] + derivative(x_[0]) * (x - x_[0]);
  if (x >= x_[n - 1]) return y_[n - 1] + derivative(x_[n - 1]) * (x - x_[n - 1]);
  const Eigen::Index i = segment(x);
  const double h = x_[i + 1] - x_[i];
  const double a = (x_[i + 1] - x) / h;
  const double b = (x - x_[i]) / h;
  return a * y_[i] + b * y_[i + 1] +
         ((a * a * a - a) * second_[i] + (b * b * b - b) * second_[i + 1]) * h * h / 6.0;
}

double NaturalCubicSpline::derivative(double x) const {
  const Eigen::Index n = x_.size();
  if (n == 1) return 0.0;
  x = std::clamp(x, x_[0], x_[n - 1]);
  const Eigen::Index i = segment(x);
  const double h = x_[i + 1] - x_[i];
  const double a = (x_[i + 1] - x) / h;
  const double b = (x - x_[i]) / h;
  return (y_[i + 1] - y_[i]) / h +
         ((1.0 - 3.0 * a * a) * second_[i] + (3.0 * b * b - 1.0) * second_[i + 1]) * h / 6.0;
}

}  // namespace casimir::numerics
