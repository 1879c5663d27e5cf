#include <cmath>

#include "topimpute/estimators.hpp"

namespace topimpute {

FitResult ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const OlsOptions& options) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (y.size() != n) throw std::invalid_argument("ols: X and y row counts differ");
  if (n < p) throw EstimationError("ols: fewer rows than columns");
  if (options.ridge < 0.0) throw std::invalid_argument("ols: ridge penalty must be nonnegative");

  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  if (options.weights) {
    if (options.weights->size() != n) throw std::invalid_argument("ols: weight length differs from rows");
    if ((options.weights->array() < 0.0).any()) throw std::invalid_argument("ols: negative weight");
    w = *options.weights;
  }

  std::vector<bool> pen = options.penalized;
  if (pen.empty()) {
    pen.assign(static_cast<std::size_t>(p), true);
    if (!options.penalize_intercept && p > 0) pen[0] = false;
  }
  if (static_cast<Eigen::Index>(pen.size()) != p) throw std::invalid_argument("ols: penalty mask size");

  // Augmented least squares [sqrt(W) X; sqrt(lambda) I_pen] b = [sqrt(W) y; 0].
  Eigen::Index n_pen = 0;
  if (options.ridge > 0.0)
    for (bool b : pen) n_pen += b ? 1 : 0;
  Eigen::MatrixXd A(n + n_pen, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + n_pen);
  const Eigen::VectorXd sw = w.cwiseSqrt();
  A.topRows(n) = sw.asDiagonal() * X;
  rhs.head(n) = sw.cwiseProduct(y);
  if (n_pen > 0) {
    A.bottomRows(n_pen).setZero();
    const double sl = std::sqrt(options.ridge);
    Eigen::Index r = n;
    for (Eigen::Index j = 0; j < p; ++j)
      if (pen[static_cast<std::size_t>(j)]) A(r++, j) = sl;
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  if (qr.rank() < p) throw EstimationError("ols: design is rank deficient");

  FitResult fit;
  fit.coefficients = qr.solve(rhs);
  const Eigen::VectorXd resid = y - X * fit.coefficients;
  const double ssr = (w.array() * resid.array().square()).sum();
  const double dof = static_cast<double>(n - p);
  const double sigma2 = dof > 0 ? ssr / dof : 0.0;
  fit.resid_var = sigma2;

  Eigen::MatrixXd gram = A.transpose() * A;
  fit.coef_cov = sigma2 * gram.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  fit.coef_cov = 0.5 * (fit.coef_cov + fit.coef_cov.transpose()).eval();
  fit.loglik = -0.5 * ssr;
  fit.converged = true;
  fit.iterations = 1;
  return fit;
}

}  // namespace topimpute
