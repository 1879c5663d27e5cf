#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "topimpute/estimators.hpp"
#include "topimpute/rng.hpp"

namespace topimpute {

enum class CensorState : std::uint8_t { uncensored, at_upper, at_lower };

/// Design (covariates and LOOM columns) with per-row censoring limits.
struct TobitSpec {
  Eigen::MatrixXd design;
  Eigen::VectorXd upper;                 ///< C per row
  std::optional<Eigen::VectorXd> lower;  ///< artificial c per row, below C
};

/// Censored-normal log likelihood in Olsen's parameters theta = (b / sigma,
/// 1 / sigma), in which it is globally concave. Censored rows use the limits
/// in `spec`, not `y`.
LikelihoodEval tobit_loglik(const TobitSpec& spec, const Eigen::VectorXd& y, std::span<const CensorState> state,
                            const Eigen::VectorXd& theta);

/// Maximum likelihood fit. coefficients = b, resid_var = sigma^2, coef_cov from
/// the inverse observed information mapped to b by the delta method.
/// Throws EstimationError when fewer than p + 1 rows are uncensored or the
/// iterations do not converge.
FitResult fit_tobit(const TobitSpec& spec, const Eigen::VectorXd& y, std::span<const CensorState> state,
                    const NewtonOptions& options = {});

/// Artificial lower limit: the empirical quantile (linear interpolation) of
/// the recorded log wages of the cell. Throws std::invalid_argument unless
/// 0 < quantile < 1 - censoring share.
double artificial_lower_limit(std::span<const double> y, std::span<const CensorState> state, double quantile);

struct LowerCensoring {
  Eigen::VectorXd y;             ///< copy with re-marked rows clamped to the limit
  std::vector<CensorState> state;
  std::size_t remarked = 0;
};

/// Uncensored rows strictly below `limit` become at_lower; at_upper rows are
/// never touched. The inputs are not modified.
LowerCensoring apply_lower_limit(const Eigen::VectorXd& y, std::span<const CensorState> state, double limit);

/// sqrt(x V(b) x' + sigma^2).
double tobit_predictive_sd(const FitResult& fit, const Eigen::Ref<const Eigen::RowVectorXd>& x);

/// One draw per requested row: x b + u with u ~ N(0, sd_row^2) truncated to
/// u > C - x b, so every value exceeds the row's upper limit. Rows are drawn in
/// the given order.
std::vector<double> impute_tobit(const FitResult& fit, const Eigen::MatrixXd& design, const Eigen::VectorXd& upper,
                                 std::span<const Eigen::Index> rows, Rng& rng);

}  // namespace topimpute
