#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "topimpute/estimators.hpp"
#include "topimpute/rng.hpp"
#include "topimpute/tobit.hpp"

namespace topimpute {

struct CqrOptions {
  double delta = 0.05;       ///< step 1 keeps rows with p_i > tau + delta
  double zeta_scale = 0.05;  ///< step 2 margin: zeta = zeta_scale * sd of uncensored residuals
  QuantregOptions quantreg;
};

/// Row counts of the two selection steps.
struct CqrDiagnostics {
  std::size_t step1_rows = 0;
  std::size_t step2_rows = 0;
  double zeta = 0.0;
};

/// Probit probabilities of being uncensored, shared by every tau of a cell.
/// Throws EstimationError on separation. Returns all ones when no row is
/// censored.
Eigen::VectorXd uncensored_probability(const Eigen::MatrixXd& design, std::span<const CensorState> state);

/// Three-step censored quantile regression. Rows at_upper are censored;
/// at_lower rows are not accepted. With no censored rows the selection steps
/// are vacuous and the result is plain quantreg(tau).
/// Throws InfeasibleError when tau >= the uncensored share or a selected
/// subsample has fewer than 2p rows.
FitResult cqr_three_step(const TobitSpec& spec, const Eigen::VectorXd& y, std::span<const CensorState> state,
                         double tau, const CqrOptions& options = {},
                         const Eigen::VectorXd* probability = nullptr, CqrDiagnostics* diagnostics = nullptr);

/// b(q) over a quantile grid. Feasible points form a prefix of the grid.
struct QuantileProfile {
  std::vector<double> grid;
  Eigen::MatrixXd coefficients;  ///< p x grid; NaN where not estimated
  std::vector<bool> feasible;
  std::optional<std::size_t> qc_index;
  /// Coefficients cover the whole grid (output of extrapolate_profile).
  bool extrapolated = false;

  std::optional<double> q_c() const { return qc_index ? std::optional<double>(grid[*qc_index]) : std::nullopt; }
  std::size_t feasible_count() const { return qc_index ? *qc_index + 1 : 0; }
};

/// {0.01, 0.02, ..., 0.99, 1.0}.
std::vector<double> default_quantile_grid();

/// cqr_three_step at each grid point, ascending, until the first infeasible
/// point; the remaining points are flagged infeasible. Throws InfeasibleError
/// when no grid point is feasible and std::invalid_argument for a grid that is
/// not strictly increasing.
QuantileProfile coefficient_profile(const TobitSpec& spec, const Eigen::VectorXd& y,
                                    std::span<const CensorState> state, const std::vector<double>& grid,
                                    const CqrOptions& options = {});

struct AtLimitFit {
  double q_c = 0.0;
  FitResult fit;
};

/// Largest grid point below the uncensored share at which cqr_three_step is
/// feasible, searched downward from the top. Cheaper than a full profile when
/// only b(q_C) is needed.
AtLimitFit fit_at_limit_quantile(const TobitSpec& spec, const Eigen::VectorXd& y, std::span<const CensorState> state,
                                 const std::vector<double>& grid, const CqrOptions& options = {});

/// x b(q_C) + e with e ~ N(0, resid_sd^2) truncated to e > C - x b(q_C).
/// Every value exceeds the row's limit.
std::vector<double> impute_cqr_at_limit(const FitResult& fit_at_qc, const Eigen::MatrixXd& design,
                                        const Eigen::VectorXd& upper, std::span<const Eigen::Index> rows,
                                        double resid_sd, Rng& rng);

struct ExtrapolationOptions {
  double penalty = 0.002;
  double min_quantile = 0.10;  ///< feasible points below this are not used in the fit
  /// Weight points by their distance above the lowest used quantile instead
  /// of q_C - q, so points near the limit dominate.
  bool inverted_weights = false;
};

/// Weighted ridge fit of every coefficient path on (1, q, q^2) over the
/// feasible points >= min_quantile with weights q_C - q_i (intercept not
/// penalized), evaluated on the full grid. Throws InfeasibleError when fewer
/// than three points carry positive weight.
QuantileProfile extrapolate_profile(const QuantileProfile& profile, const ExtrapolationOptions& options = {});

/// Sorts the path ascending: the monotone path with the same values.
std::vector<double> monotone_rearrange(std::vector<double> path);

struct ExtrapolatedImputation {
  std::vector<double> values;
  std::vector<bool> fallback;  ///< row used the fallback imputer
  std::size_t fallback_count = 0;
};

/// For each row: rearranged index path x b~(q) over the grid, q_min = first
/// grid point with x b~(q) >= C, u uniform on the grid points in [q_min, 1],
/// value x b~(u). Rows whose path never reaches C use `fallback(row)`.
ExtrapolatedImputation impute_cqr_extrapolated(const QuantileProfile& extrapolated, const Eigen::MatrixXd& design,
                                               const Eigen::VectorXd& upper, std::span<const Eigen::Index> rows,
                                               Rng& rng, const std::function<double(Eigen::Index)>& fallback);

/// quantile, feasible, one column per coefficient.
void write_profile_csv(const std::filesystem::path& path, const QuantileProfile& profile,
                       const std::vector<std::string>& coefficient_names);

}  // namespace topimpute
