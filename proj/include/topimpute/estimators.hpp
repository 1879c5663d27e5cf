#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "topimpute/rng.hpp"

namespace topimpute {

/// Raised when an estimator cannot produce a result for the given data.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A requested quantile (or selection step) is not identified by the data.
class InfeasibleError : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

/// Output shared by every estimator.
struct FitResult {
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd coef_cov;          ///< Covariance of the coefficient estimates.
  std::optional<double> resid_var;   ///< Residual variance, when the model defines one.
  double loglik = 0.0;               ///< Log likelihood, or minus the objective for LP fits.
  bool converged = false;
  int iterations = 0;

  Eigen::VectorXd std_errors() const { return coef_cov.diagonal().cwiseMax(0.0).cwiseSqrt(); }
};

/// Value, gradient and Hessian of a log likelihood at one parameter point.
struct LikelihoodEval {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

struct NewtonOptions {
  double gradient_tol = 1e-8;  ///< On the max-norm of the per-observation average gradient.
  int max_iterations = 200;
};

// ---- least squares --------------------------------------------------------

struct OlsOptions {
  std::optional<Eigen::VectorXd> weights;
  double ridge = 0.0;
  /// Per-column penalty mask; when empty every column except an intercept in
  /// column 0 (if penalize_intercept is false) is penalized.
  std::vector<bool> penalized;
  bool penalize_intercept = false;
};

/// Weighted ridge least squares: minimizes sum w_i (y_i - x_i b)^2 + ridge * |b_pen|^2.
/// coef_cov = resid_var * (X'WX + ridge I_pen)^-1, resid_var = sum w r^2 / (n - p).
FitResult ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const OlsOptions& options = {});

// ---- probit ---------------------------------------------------------------

LikelihoodEval probit_loglik(const Eigen::MatrixXd& X, std::span<const int> d, const Eigen::VectorXd& gamma);

/// Maximum likelihood probit of P(d = 1 | x) = Phi(x gamma).
/// Throws EstimationError on single-class input or (quasi-)complete separation.
FitResult probit(const Eigen::MatrixXd& X, std::span<const int> d, const NewtonOptions& options = {});

// ---- quantile regression --------------------------------------------------

struct QuantregOptions {
  double gap_tol = 1e-10;      ///< Relative duality-gap tolerance of the interior point phase.
  int max_iterations = 100;
  int max_pivots = 100000;     ///< Simplex polish budget.
};

/// Sum of check-function losses rho_tau(y - X b).
double check_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& b, double tau);

/// Linear quantile regression. An interior point (Frisch-Newton) solve is
/// followed by a vertex polish, so the returned solution is an exact basic
/// solution. Among multiple minimizers the one with the smallest sum of
/// fitted values is returned (the left limit of the quantile process), e.g.
/// the lower middle order statistic for an even-sized median.
/// coefficients holds b; loglik holds minus the attained objective.
FitResult quantreg(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau,
                   const QuantregOptions& options = {});

// ---- sampling -------------------------------------------------------------

/// Draw from N(mean, sd^2) conditioned on the value exceeding `lower`.
/// Inverse CDF when (lower - mean) / sd <= 4, exponential-proposal rejection
/// beyond. The result is always strictly greater than `lower`.
double trunc_normal_draw(double mean, double sd, double lower, Rng& rng);

// ---- densities and order statistics ----------------------------------------

/// Gaussian kernel density estimate at each grid point.
std::vector<double> kde(std::span<const double> values, std::span<const double> grid, double bandwidth);

/// Silverman's rule of thumb: 0.9 min(sd, IQR / 1.34) n^(-1/5).
double silverman_bandwidth(std::span<const double> values);

/// Empirical quantile by linear interpolation between order statistics
/// (h = (n - 1) q). Used everywhere a sample quantile is needed.
double empirical_quantile(std::span<const double> values, double q);
double empirical_quantile_sorted(std::span<const double> sorted, double q);

}  // namespace topimpute
