#pragma once

#include <Eigen/Dense>
#include <compare>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace topimpute {

/// One employment spell. Wages are natural logs of daily pre-tax wages.
struct SpellRecord {
  std::string spell_id;
  std::string person_id;
  std::string estab_id;
  std::string occ_id;
  int year = 0;
  std::string region;
  std::string gender;
  std::string age_group;
  std::string education;
  double duration = 0.0;  ///< days, > 0
  double log_wage = 0.0;  ///< equals the upper limit when censored
  bool censored = false;
  std::vector<double> covariates;
};

/// Upper (and optional artificial lower) censoring limit on the log scale
/// for one (year, region).
struct CensorRule {
  int year = 0;
  std::string region;
  double upper_limit = 0.0;
  std::optional<double> lower_limit;
};

/// Validated set of rules, at most one per (year, region).
class CensorRules {
 public:
  CensorRules() = default;
  explicit CensorRules(std::vector<CensorRule> rules);

  const CensorRule* find(int year, const std::string& region) const;
  /// Throws std::out_of_range when no rule exists.
  const CensorRule& at(int year, const std::string& region) const;
  const std::vector<CensorRule>& rules() const { return rules_; }
  bool empty() const { return rules_.empty(); }

 private:
  std::vector<CensorRule> rules_;
  std::map<std::pair<int, std::string>, std::size_t> index_;
};

/// Parses "year, region, upper[, lower]".
CensorRule parse_censor_rule(const std::string& text);

struct Panel {
  std::vector<std::string> covariate_names;
  std::vector<SpellRecord> records;
};

/// Maps canonical field names to CSV column names. Canonical fields are
/// spell_id, person_id, estab_id, occ_id, year, region, duration, log_wage,
/// censored, gender, age_group, education; unmapped fields use their own name.
struct Schema {
  std::map<std::string, std::string> columns;
  std::vector<std::string> covariates;
  /// When true the wage column holds raw daily wages and is logged at ingest.
  bool raw_wages = false;

  std::string column(const std::string& field) const;
};

struct IngestReport {
  std::size_t rows_read = 0;
  std::size_t accepted = 0;
  std::map<std::string, std::size_t> rejected_by_reason;
  std::size_t rejected() const;
};

struct IngestResult {
  Panel panel;
  IngestReport report;
};

/// Reads a spell CSV. Throws ConfigError for a missing mandatory column;
/// invalid rows are rejected and counted by reason. When the file has no
/// censored column the flag is derived from log_wage >= upper limit.
IngestResult ingest(std::istream& in, const Schema& schema, const CensorRules& rules);
IngestResult ingest(const std::filesystem::path& path, const Schema& schema, const CensorRules& rules);

/// Writes records in the canonical column layout read by ingest().
void write_panel_csv(const std::filesystem::path& path, const Panel& panel);

// ---- imputation cells ------------------------------------------------------

/// Cells always split by year and region; the remaining attributes are
/// optional. An attribute that is not used holds "*".
struct CellKey {
  int year = 0;
  std::string gender;
  std::string age_group;
  std::string education_group;
  std::string region;

  auto operator<=>(const CellKey&) const = default;
  /// Stable printable identifier, e.g. "2010-west-m-30_44-edu2".
  std::string id() const;
};

struct CellSpec {
  bool by_gender = true;
  bool by_age_group = true;
  bool by_education = true;
  /// Declared levels per attribute ("gender", "age_group", "education",
  /// "region"); an empty list accepts any value.
  std::map<std::string, std::vector<std::string>> levels;
};

using CellMap = std::map<CellKey, std::vector<std::size_t>>;

CellKey cell_key_of(const SpellRecord& r, const CellSpec& spec);
/// Disjoint cover of the records by cell. Indices point into panel.records
/// and are ascending within each cell. Throws ConfigError for a value outside
/// the declared levels.
CellMap partition(const Panel& panel, const CellSpec& spec);

/// Fraction of censored records; throws std::invalid_argument when empty.
double censoring_share(std::span<const SpellRecord> cell);
double censoring_share(const Panel& panel, std::span<const std::size_t> rows);

// ---- design matrices -------------------------------------------------------

struct DesignMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> column_names;
  bool includes_intercept = false;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

/// Assembles [1 | columns...]. Non-intercept columns that are constant over
/// the rows carry no information beside the intercept and are dropped; their
/// names are appended to `dropped` when given.
DesignMatrix make_design(Eigen::Index n, bool intercept,
                         const std::vector<std::pair<std::string, Eigen::VectorXd>>& columns,
                         std::vector<std::string>* dropped = nullptr);

/// Selected covariates of the given records as named columns.
std::vector<std::pair<std::string, Eigen::VectorXd>> covariate_columns(const Panel& panel,
                                                                       std::span<const std::size_t> rows,
                                                                       std::span<const std::string> names);

}  // namespace topimpute
