#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "topimpute/config.hpp"
#include "topimpute/panel.hpp"
#include "topimpute/tobit.hpp"

namespace topimpute {

enum class Regime {
  tobit,           ///< constant coefficients, homoscedastic normal errors
  location_scale,  ///< y = x b + (x g) e: coefficient quantile paths b_j + g_j Phi^-1(q)
};

std::string regime_name(Regime r);
Regime parse_regime(const std::string& name);

// ---- single cell -------------------------------------------------------------

/// One imputation cell drawn directly from a regression model. Column 0 of
/// the design is the intercept; the remaining columns are U(0, 1). The
/// location_scale regime needs x g > 0 on the whole unit cube, i.e.
/// g_0 + sum of the negative slopes > 0.
struct CellSynthConfig {
  std::size_t n = 10000;
  Eigen::VectorXd beta = Eigen::Vector3d(4.5, 0.5, 0.3);
  Eigen::VectorXd gamma;  ///< scale coefficients; used by location_scale only
  double sigma = 0.4;     ///< error sd in the tobit regime
  Regime regime = Regime::tobit;
  double target_share = 0.3;
  std::uint64_t seed = 1;
};

struct CellSample {
  TobitSpec spec;                  ///< design and the limit on every row
  Eigen::VectorXd truth;
  Eigen::VectorXd y;               ///< censored at the limit
  std::vector<CensorState> state;
  double limit = 0.0;
};

/// The limit is the empirical (1 - target_share) quantile of the true values.
/// Throws ConfigError for an invalid configuration.
CellSample generate_cell(const CellSynthConfig& config);

// ---- panel -------------------------------------------------------------------

struct SynthConfig {
  std::size_t n_persons = 5000;
  std::size_t n_estabs = 500;
  std::size_t n_occs = 40;
  int first_year = 2010;
  int years = 3;
  std::vector<std::string> regions{"west", "east"};
  double east_share = 0.3;
  double employment_rate = 0.9;   ///< chance a person works in a given year
  double second_spell_rate = 0.2; ///< chance of a second spell in a working year
  int max_spells_per_year = 2;
  Regime regime = Regime::tobit;
  /// Coefficients on (1, age/10, (age/10)^2, log establishment size, female).
  Eigen::VectorXd beta = (Eigen::VectorXd(5) << 3.0, 0.6, -0.06, 0.05, -0.15).finished();
  /// location_scale: noise sd = g0 + g1 (age/10 - 4) + g2 (log size - 3), floored at 0.05.
  Eigen::VectorXd gamma = Eigen::Vector3d(0.25, 0.08, 0.06);
  double person_sd = 0.3;
  double estab_sd = 0.2;
  double occ_sd = 0.1;
  double noise_sd = 0.2;
  double year_trend = 0.02;
  double target_share = 0.12;
  std::uint64_t seed = 1;

  /// Reads the keys persons, estabs, occs, first_year, years, regime,
  /// employment_rate, second_spell_rate, person_sd, estab_sd, occ_sd,
  /// noise_sd, target_share and seed under the given prefix.
  static SynthConfig from_config(const KeyValueConfig& cfg, const std::string& prefix = "synth.");
};

struct SynthPanel {
  Panel panel;                  ///< censored wages recorded at the limit
  std::vector<double> truth;    ///< true log wages aligned with panel.records
  CensorRules rules;            ///< one limit per (year, region)
};

/// Covariates of the generated panel, in column order.
inline const std::vector<std::string> kSynthCovariates{"age10", "age10_sq", "log_size", "female"};

/// Throws ConfigError for an infeasible configuration (e.g. a spell count
/// per year outside [1, max_spells_per_year] or a share outside [0, 0.95]).
SynthPanel generate(const SynthConfig& config);

/// spell_id, true_log_wage.
void write_truth_csv(const std::filesystem::path& path, const Panel& panel, const std::vector<double>& truth);
/// spell_id -> true log wage.
std::map<std::string, double> read_truth_csv(const std::filesystem::path& path);
/// One `rule = year, region, upper` line per rule.
void write_rules(const std::filesystem::path& path, const CensorRules& rules);

}  // namespace topimpute
