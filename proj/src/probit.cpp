#include <cmath>

#include "newton.hpp"
#include "topimpute/estimators.hpp"
#include "topimpute/normal.hpp"

namespace topimpute {

LikelihoodEval probit_loglik(const Eigen::MatrixXd& X, std::span<const int> d, const Eigen::VectorXd& gamma) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  const Eigen::VectorXd eta = X * gamma;
  LikelihoodEval out;
  out.gradient = Eigen::VectorXd::Zero(p);
  out.hessian = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd curvature(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sign = d[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
    const double z = sign * eta(i);
    const double lam = normal::mills_lower(z);
    out.value += normal::log_cdf(z);
    out.gradient.noalias() += (sign * lam) * X.row(i).transpose();
    curvature(i) = lam * (z + lam);
  }
  out.hessian.noalias() = -(X.transpose() * curvature.asDiagonal() * X);
  return out;
}

FitResult probit(const Eigen::MatrixXd& X, std::span<const int> d, const NewtonOptions& options) {
  const Eigen::Index n = X.rows();
  if (static_cast<Eigen::Index>(d.size()) != n) throw std::invalid_argument("probit: X and d sizes differ");
  std::size_t ones = 0;
  for (int v : d) ones += v ? 1 : 0;
  if (ones == 0 || ones == d.size()) throw EstimationError("probit: outcome has a single class");

  auto f = [&](const Eigen::VectorXd& g) { return probit_loglik(X, d, g); };
  const auto res = detail::newton_maximize(f, Eigen::VectorXd::Zero(X.cols()), static_cast<double>(n), options);

  // Under complete separation the likelihood approaches one and the
  // information matrix collapses along the separating direction.
  const double max_eta = (X * res.theta).cwiseAbs().maxCoeff();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> info(-res.eval.hessian);
  const double lo = info.eigenvalues().minCoeff();
  const double hi = info.eigenvalues().maxCoeff();
  if (max_eta > 30.0 || res.eval.value > -1e-6 * static_cast<double>(n) || !(lo > 1e-10 * hi))
    throw EstimationError("probit: (quasi-)complete separation detected");

  FitResult fit;
  fit.coefficients = res.theta;
  fit.coef_cov = (-res.eval.hessian).ldlt().solve(Eigen::MatrixXd::Identity(X.cols(), X.cols()));
  fit.coef_cov = 0.5 * (fit.coef_cov + fit.coef_cov.transpose()).eval();
  fit.loglik = res.eval.value;
  fit.converged = res.converged;
  fit.iterations = res.iterations;
  if (!fit.converged) throw EstimationError("probit: Newton iterations did not converge");
  return fit;
}

}  // namespace topimpute
