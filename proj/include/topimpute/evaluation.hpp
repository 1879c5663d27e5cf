#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "topimpute/panel.hpp"
#include "topimpute/selection.hpp"

namespace topimpute {

struct ArtificialCensoring {
  Panel panel;                     ///< wages at or above the limit replaced by it
  std::vector<double> truth;       ///< original log wages, aligned with panel.records
  std::size_t censored = 0;
};

/// Applies the rules to records whose log_wage holds the true wage. Throws
/// std::invalid_argument when a (year, region) would be censored entirely or
/// a record has no rule.
ArtificialCensoring artificial_censor(const Panel& truth_panel, const CensorRules& rules);

/// Copy of `panel` with log wages replaced by `truth` and flags cleared.
Panel restore_truth(const Panel& panel, std::span<const double> truth);

struct RegressionMetrics {
  double mse_pred = 0.0;
  double mae_pred = 0.0;
  double msd_coef = 0.0;
  double mad_coef = 0.0;
};

/// OLS of the true and of the imputed log wages on `design`; deviations of
/// the fitted values (mean over rows) and of the coefficients (mean over
/// coefficients). Throws EstimationError for a rank-deficient design.
RegressionMetrics regression_metrics(std::span<const double> truth, std::span<const double> imputed,
                                     const Eigen::MatrixXd& design);

struct DistributionMetrics {
  double kl_div = 0.0;  ///< KL(truth || imputed)
  double dev_q90 = 0.0;  ///< quantile_0.9(truth) - quantile_0.9(imputed)
  double dev_q99 = 0.0;
};

/// Kernel densities of both samples on a shared 512-point grid spanning both
/// samples +-3 bandwidths, floored at 1e-12 and integrated by the trapezoid
/// rule. The bandwidth defaults to Silverman's rule on the truth. Throws
/// std::invalid_argument for empty or constant samples.
DistributionMetrics distribution_metrics(std::span<const double> truth, std::span<const double> imputed,
                                         std::optional<double> bandwidth = std::nullopt);

struct MetricsReport {
  RegressionMetrics regression;
  DistributionMetrics distribution;
  std::optional<double> sad;
};

/// One block per cell: metrics as rows, methods as columns in the given
/// order. Coefficient and KL metrics are written x100 and labelled so.
void write_metrics_header(std::ostream& out, const std::vector<Method>& methods);
void write_metrics_block(std::ostream& out, const std::string& cell_id, const std::vector<Method>& methods,
                         const std::map<Method, MetricsReport>& reports);

}  // namespace topimpute
