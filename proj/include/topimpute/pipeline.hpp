#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "topimpute/config.hpp"
#include "topimpute/evaluation.hpp"
#include "topimpute/looms.hpp"
#include "topimpute/methods.hpp"
#include "topimpute/panel.hpp"

namespace topimpute {

/// Everything a run needs, read from one key = value file. Relative paths
/// are resolved against the directory of that file.
struct PipelineConfig {
  std::filesystem::path input;
  std::optional<std::filesystem::path> truth;  ///< spell_id, true_log_wage
  std::filesystem::path output_dir = "out";
  Schema schema;
  CensorRules rules;
  CellSpec cells;
  CellMethodOptions methods;
  /// Regressors of the evaluation model; defaults to the schema covariates.
  std::vector<std::string> eval_covariates;
  bool use_looms = true;
  std::size_t min_uncensored = 200;
  double max_censor_share = 0.95;
  std::uint64_t seed = 1;
  int jobs = 1;
  int draws = 1;
  /// Density export range as multiples of the limit, and its step.
  double density_lower = 0.9;
  double density_upper = 1.1;
  double density_step = 0.001;
  /// Text of the resolved configuration, hashed into the manifest.
  std::string canonical;

  /// Throws ConfigError for a missing or invalid key.
  static PipelineConfig from_config(const KeyValueConfig& cfg, const std::filesystem::path& base_dir = ".");
  static PipelineConfig load(const std::filesystem::path& path);
};

enum class CellStatus {
  imputed,      ///< a method was selected and applied
  no_censoring, ///< nothing to impute
  unfittable,   ///< too few rows, too much censoring, or every method failed
};

std::string cell_status_name(CellStatus s);

struct CellReport {
  CellKey key;
  std::vector<std::size_t> rows;  ///< indices into the panel
  std::size_t censored = 0;
  double limit = 0.0;
  CellStatus status = CellStatus::unfittable;
  std::string message;
  std::optional<Method> chosen;
  std::vector<std::string> design_columns;
  CellOutcome outcome;
  Eigen::VectorXd y;  ///< recorded log wages of the cell rows
  std::optional<FitResult> stage_one;
  std::vector<std::string> stage_one_columns;
};

struct ImputationRun {
  Panel panel;
  std::vector<CellReport> cells;     ///< in CellKey order
  std::vector<double> imputed;       ///< per record; observed value when not imputed
  std::vector<std::string> method_used;
  std::vector<std::string> cell_id;
  std::vector<std::vector<double>> extra_draws;  ///< draws 2..k per record
  LoomSet looms;
  std::vector<double> stage_one_log_wages;  ///< per record; empty without LOOMs
  std::size_t unfittable_cells() const;
};

/// Whole pipeline in memory: partition, stage-one Tobit without LOOMs,
/// second-stage LOOMs over the panel, all methods per cell, SAD selection.
/// Cells are processed on `config.jobs` threads; results do not depend on
/// the thread count.
ImputationRun run_imputation(const PipelineConfig& config, const Panel& panel);

/// Reads the input, runs the imputation and writes imputed.csv,
/// selection.csv, fits.json and manifest.txt. Returns 0, or 2 when some cell
/// with censored rows could not be imputed.
int run_impute(const PipelineConfig& config);

/// As run_impute, then compares every method with the truth file:
/// metrics.csv (one block per cell) and agreement.csv.
int run_evaluate(const PipelineConfig& config);

/// densities.csv: kernel density of every method's completed wages (and of
/// the truth when configured) per cell around the limit.
int run_densities(const PipelineConfig& config);

/// profiles/<cell>.csv and profiles/<cell>_extrapolated.csv.
int run_profile(const PipelineConfig& config);

/// Ingests config.input with config.schema and config.rules.
IngestResult load_input(const PipelineConfig& config);

}  // namespace topimpute
