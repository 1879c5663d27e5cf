#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "topimpute/cqr.hpp"
#include "topimpute/estimators.hpp"
#include "topimpute/selection.hpp"
#include "topimpute/tobit.hpp"

namespace topimpute {

/// A method with its parameter; only tobit_lr uses lower_quantile.
struct MethodSpec {
  Method method = Method::tobit_r;
  double lower_quantile = 0.2;
};

/// "tobit_r", "tobit_lr@0.2", "cqr_at_limit", "cqr_extrapolated". A bare
/// "tobit_lr" takes the default quantile. Throws ConfigError.
MethodSpec parse_method_spec(const std::string& text);
std::string method_spec_name(const MethodSpec& spec);

/// tobit_r, tobit_lr@0.2 and cqr_at_limit.
std::vector<MethodSpec> default_methods();

struct CellMethodOptions {
  std::vector<MethodSpec> methods = default_methods();
  CqrOptions cqr;
  ExtrapolationOptions extrapolation;
  std::vector<double> grid = default_quantile_grid();
  /// Artificial lower limit of tobit_lr; when empty it is the method's
  /// quantile of the recorded values.
  std::optional<double> lower_limit;
  /// Error sd of cqr_at_limit; defaults to the right-censored Tobit sigma.
  std::optional<double> resid_sd;
  SadWindow window;
  /// SAD bandwidth; defaults to Silverman's rule on the recorded values.
  std::optional<double> bandwidth;
};

struct MethodOutcome {
  MethodSpec spec;
  bool ok = false;
  std::string error;
  std::vector<double> imputed;  ///< aligned with CellOutcome::censored_rows
  std::size_t fallback_count = 0;
  std::optional<FitResult> fit;  ///< Tobit fit, or the CQR fit at q_C
  std::optional<double> q_c;
  std::optional<double> lower_limit;
};

struct CellOutcome {
  std::vector<Eigen::Index> censored_rows;  ///< at_upper rows in ascending order
  std::map<Method, MethodOutcome> methods;
  std::optional<SelectionReport> selection;
  std::string selection_error;
  double bandwidth = 0.0;
  /// Values at or below the row's limit over all successful methods; zero
  /// by construction of the samplers.
  std::size_t support_violations = 0;

  /// Recorded values with the censored rows replaced by the method's draws.
  Eigen::VectorXd completed(const Eigen::VectorXd& y, Method m) const;
};

/// Runs every method on one cell and selects by SAD. Method failures are
/// recorded, not thrown; the selection is empty when no method produced a
/// defined score. Each method draws from its own substream of `seed` keyed
/// by `label` and the method name, so results do not depend on which other
/// methods run. A single `limit` is required for the selection window: the
/// cell's upper limits must all be equal.
CellOutcome run_cell_methods(const TobitSpec& spec, const Eigen::VectorXd& y, std::span<const CensorState> state,
                             const CellMethodOptions& options, std::uint64_t seed, const std::string& label);

}  // namespace topimpute
