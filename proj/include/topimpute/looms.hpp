#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "topimpute/panel.hpp"

namespace topimpute {

/// Duration-weighted leave-one-out means (log scale), one entry per spell.
/// An entry is empty when its leave-one-out set has no spells.
struct LoomSet {
  std::vector<std::optional<double>> person;
  std::vector<std::optional<double>> estab;
  std::vector<std::optional<double>> occ;
  /// Leave-one-out duration sums.
  std::vector<double> person_support;
  std::vector<double> estab_support;
  std::vector<double> occ_support;
};

/// Years pooled for a group observed in year t whose first and last years in
/// the data are `first` and `last`: {t, t+1} in the founding year, {t-1, t} in
/// the closing year, {t} when both coincide, {t-1, t, t+1} otherwise.
std::vector<int> pooled_years(int t, int first, int last);

/// ln( sum_{s' != s} W_s' d_s' / sum_{s' != s} d_s' ) over the other spells of
/// the same person. `raw_wage` is on the raw (exponentiated) scale and aligned
/// with `records`. Throws std::invalid_argument for nonpositive wages or
/// durations.
std::vector<std::optional<double>> person_loom(std::span<const SpellRecord> records, std::span<const double> raw_wage,
                                               std::vector<double>* support = nullptr);

/// Mean over all co-workers j != i in the same establishment across the pooled
/// years of the spell's year.
std::vector<std::optional<double>> estab_loom(std::span<const SpellRecord> records, std::span<const double> raw_wage,
                                              std::vector<double>* support = nullptr);

/// As estab_loom with occupations in place of establishments.
std::vector<std::optional<double>> occ_loom(std::span<const SpellRecord> records, std::span<const double> raw_wage,
                                            std::vector<double>* support = nullptr);

LoomSet compute_looms(std::span<const SpellRecord> records, std::span<const double> raw_wage);

/// Log wages for every row of one cell: observed values for uncensored rows,
/// first-stage imputations for censored rows.
using CellImputer = std::function<std::vector<double>(const CellKey&, std::span<const std::size_t>)>;

/// Thrown when the first stage fails in a cell; carries the cell id.
class StageOneError : public std::runtime_error {
 public:
  StageOneError(const CellKey& cell, const std::string& what)
      : std::runtime_error("stage 1 failed in cell " + cell.id() + ": " + what), cell_(cell) {}
  const CellKey& cell() const { return cell_; }

 private:
  CellKey cell_;
};

/// First stage: every cell is imputed without LOOMs by `stage_one`. Second
/// stage: LOOMs are computed from observed wages for uncensored spells and
/// stage-one imputations for censored spells. Cells absent from `cells` (or
/// for which `skip` returns true) keep their recorded wages.
LoomSet two_stage_looms(const Panel& panel, const CellMap& cells, const CellImputer& stage_one,
                        std::vector<double>* stage_one_log_wages = nullptr,
                        const std::function<bool(const CellKey&)>& skip = {});

/// Diagnostic dump: spell_id, person_loom, estab_loom, occ_loom and supports.
void write_looms_csv(const std::filesystem::path& path, std::span<const SpellRecord> records, const LoomSet& looms);

}  // namespace topimpute
