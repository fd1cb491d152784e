#include "casimir/numerics/least_squares.hpp"

#include "casimir/errors.hpp"

#include <cmath>

namespace casimir::numerics {

namespace {

void evaluate(const ResidualFunction& fn, const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd& J,
              const LevenbergMarquardtOptions& opt) {
  if (!opt.numeric_jacobian) {
    fn(x, r, &J);
    return;
  }
  fn(x, r, nullptr);
  J.resize(r.size(), x.size());
  Eigen::VectorXd xp = x, rp;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = opt.fd_step * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + h;
    fn(xp, rp, nullptr);
    J.col(j) = (rp - r) / h;
    xp[j] = x[j];
  }
}

}  // namespace

LevenbergMarquardtResult levenberg_marquardt(const ResidualFunction& fn, Eigen::VectorXd x0,
                                             const LevenbergMarquardtOptions& opt) {
  LevenbergMarquardtResult out;
  out.x = std::move(x0);
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  evaluate(fn, out.x, r, J, opt);
  double cost = 0.5 * r.squaredNorm();
  if (!std::isfinite(cost)) throw ConvergenceError("levenberg_marquardt: non-finite residual at start");
  double lambda = opt.initial_lambda;
  const Eigen::Index n = out.x.size();

  for (int it = 0; it < opt.max_iterations; ++it) {
    out.iterations = it + 1;
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    if (g.lpNorm<Eigen::Infinity>() <= opt.gradient_tolerance * std::max(1.0, cost) || cost == 0.0) {
      out.converged = true;
      break;
    }
    const Eigen::VectorXd scale = JtJ.diagonal().cwiseMax(1e-300);
    bool accepted = false;
    bool stalled = false;
    for (int attempt = 0; attempt < 30; ++attempt) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal() += lambda * scale;
      const Eigen::VectorXd step = A.ldlt().solve(-g);
      const Eigen::VectorXd trial = out.x + step;
      Eigen::VectorXd rt;
      fn(trial, rt, nullptr);
      const double ct = 0.5 * rt.squaredNorm();
      if (std::isfinite(ct) && ct < cost) {
        const double decrease = (cost - ct) / std::max(cost, 1e-300);
        const double rel_step = step.norm() / std::max(out.x.norm(), 1e-300);
        out.x = trial;
        evaluate(fn, out.x, r, J, opt);
        cost = 0.5 * r.squaredNorm();
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        stalled = decrease < opt.cost_tolerance || rel_step < opt.step_tolerance;
        break;
      }
      lambda *= 4.0;
      if (lambda > 1e16) break;
    }
    if (!accepted || stalled) {
      out.converged = true;
      break;
    }
  }
  (void)n;
  out.cost = cost;
  out.jacobian = J;
  out.residual = r;
  return out;
}

Eigen::MatrixXd covariance(const LevenbergMarquardtResult& fit) {
  const Eigen::Index m = fit.residual.size();
  const Eigen::Index n = fit.x.size();
  const double dof = static_cast<double>(std::max<Eigen::Index>(m - n, 1));
  const double s2 = fit.residual.squaredNorm() / dof;
  const Eigen::MatrixXd JtJ = fit.jacobian.transpose() * fit.jacobian;
  return s2 * JtJ.completeOrthogonalDecomposition().pseudoInverse();
}

LinearFit linear_least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& rhs) {
  if (design.rows() < design.cols() || design.rows() != rhs.size())
    throw ValidationError("linear_least_squares: underdetermined or mismatched system");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < design.cols()) throw ConvergenceError("linear_least_squares: rank-deficient design");
  LinearFit out;
  out.coefficients = qr.solve(rhs);
  const Eigen::VectorXd res = design * out.coefficients - rhs;
  const double dof = static_cast<double>(std::max<Eigen::Index>(design.rows() - design.cols(), 1));
  const double s2 = res.squaredNorm() / dof;
  out.residual_rms = std::sqrt(res.squaredNorm() / static_cast<double>(design.rows()));
  out.covariance = s2 * (design.transpose() * design).inverse();
  return out;
}

}  // namespace casimir::numerics
