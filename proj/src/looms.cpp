#include "topimpute/looms.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

#include "topimpute/csv.hpp"

namespace topimpute {

namespace {

struct Acc {
  double wd = 0.0;  // sum of W * d
  double d = 0.0;   // sum of d
  std::size_t n = 0;
};

void validate(std::span<const SpellRecord> records, std::span<const double> raw_wage) {
  if (raw_wage.size() != records.size()) throw std::invalid_argument("loom: wage vector length differs from records");
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!(records[i].duration > 0.0)) throw std::invalid_argument("loom: spell " + records[i].spell_id + " has duration <= 0");
    if (!(raw_wage[i] > 0.0) || !std::isfinite(raw_wage[i]))
      throw std::invalid_argument("loom: spell " + records[i].spell_id + " has a nonpositive wage");
  }
}

// Spells in a fixed order independent of input order, so group sums are
// accumulated identically for any permutation of the records.
std::vector<std::size_t> canonical_order(std::span<const SpellRecord> records) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = records[a];
    const auto& rb = records[b];
    return std::tie(ra.spell_id, ra.person_id, ra.year) < std::tie(rb.spell_id, rb.person_id, rb.year);
  });
  return order;
}

std::optional<double> loom_value(const Acc& a) {
  if (a.n == 0) return std::nullopt;
  return std::log(a.wd / a.d);
}

// Shared establishment/occupation computation; `group` picks the id.
template <class GroupOf>
std::vector<std::optional<double>> group_loom(std::span<const SpellRecord> records, std::span<const double> raw_wage,
                                              std::vector<double>* support, GroupOf group) {
  validate(records, raw_wage);
  const auto order = canonical_order(records);

  std::map<std::string, std::pair<int, int>> span_years;
  std::map<std::pair<std::string, int>, Acc> by_year;
  std::map<std::tuple<std::string, int, std::string>, Acc> by_year_person;
  for (std::size_t i : order) {
    const auto& r = records[i];
    const std::string& g = group(r);
    auto [it, fresh] = span_years.try_emplace(g, r.year, r.year);
    if (!fresh) {
      it->second.first = std::min(it->second.first, r.year);
      it->second.second = std::max(it->second.second, r.year);
    }
    const double wd = raw_wage[i] * r.duration;
    Acc& a = by_year[{g, r.year}];
    a.wd += wd;
    a.d += r.duration;
    ++a.n;
    Acc& b = by_year_person[{g, r.year, r.person_id}];
    b.wd += wd;
    b.d += r.duration;
    ++b.n;
  }

  std::vector<std::optional<double>> out(records.size());
  if (support) support->assign(records.size(), 0.0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::string& g = group(r);
    const auto [first, last] = span_years.at(g);
    Acc loo;
    for (int t : pooled_years(r.year, first, last)) {
      const auto all = by_year.find({g, t});
      if (all == by_year.end()) continue;
      const auto own = by_year_person.find({g, t, r.person_id});
      Acc others = all->second;
      if (own != by_year_person.end()) {
        others.wd -= own->second.wd;
        others.d -= own->second.d;
        others.n -= own->second.n;
      }
      loo.wd += others.wd;
      loo.d += others.d;
      loo.n += others.n;
    }
    out[i] = loom_value(loo);
    if (support) (*support)[i] = loo.n ? loo.d : 0.0;
  }
  return out;
}

}  // namespace

std::vector<int> pooled_years(int t, int first, int last) {
  const bool founded = t == first;
  const bool closed = t == last;
  if (founded && closed) return {t};
  if (founded) return {t, t + 1};
  if (closed) return {t - 1, t};
  return {t - 1, t, t + 1};
}

std::vector<std::optional<double>> person_loom(std::span<const SpellRecord> records, std::span<const double> raw_wage,
                                               std::vector<double>* support) {
  validate(records, raw_wage);
  const auto order = canonical_order(records);
  std::unordered_map<std::string, Acc> totals;
  for (std::size_t i : order) {
    Acc& a = totals[records[i].person_id];
    a.wd += raw_wage[i] * records[i].duration;
    a.d += records[i].duration;
    ++a.n;
  }
  std::vector<std::optional<double>> out(records.size());
  if (support) support->assign(records.size(), 0.0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Acc& a = totals.at(records[i].person_id);
    Acc loo{a.wd - raw_wage[i] * records[i].duration, a.d - records[i].duration, a.n - 1};
    out[i] = loom_value(loo);
    if (support) (*support)[i] = loo.n ? loo.d : 0.0;
  }
  return out;
}

std::vector<std::optional<double>> estab_loom(std::span<const SpellRecord> records, std::span<const double> raw_wage,
                                              std::vector<double>* support) {
  return group_loom(records, raw_wage, support, [](const SpellRecord& r) -> const std::string& { return r.estab_id; });
}

std::vector<std::optional<double>> occ_loom(std::span<const SpellRecord> records, std::span<const double> raw_wage,
                                            std::vector<double>* support) {
  return group_loom(records, raw_wage, support, [](const SpellRecord& r) -> const std::string& { return r.occ_id; });
}

LoomSet compute_looms(std::span<const SpellRecord> records, std::span<const double> raw_wage) {
  LoomSet s;
  s.person = person_loom(records, raw_wage, &s.person_support);
  s.estab = estab_loom(records, raw_wage, &s.estab_support);
  s.occ = occ_loom(records, raw_wage, &s.occ_support);
  return s;
}

LoomSet two_stage_looms(const Panel& panel, const CellMap& cells, const CellImputer& stage_one,
                        std::vector<double>* stage_one_log_wages, const std::function<bool(const CellKey&)>& skip) {
  std::vector<double> log_wage(panel.records.size());
  for (std::size_t i = 0; i < panel.records.size(); ++i) log_wage[i] = panel.records[i].log_wage;

  for (const auto& [key, rows] : cells) {
    if (skip && skip(key)) continue;
    bool any_censored = false;
    for (auto i : rows) any_censored = any_censored || panel.records[i].censored;
    if (!any_censored) continue;
    std::vector<double> imputed;
    try {
      imputed = stage_one(key, rows);
    } catch (const std::exception& e) {
      throw StageOneError(key, e.what());
    }
    if (imputed.size() != rows.size()) throw StageOneError(key, "imputer returned wrong number of rows");
    for (std::size_t k = 0; k < rows.size(); ++k)
      if (panel.records[rows[k]].censored) log_wage[rows[k]] = imputed[k];
  }

  std::vector<double> raw(log_wage.size());
  std::transform(log_wage.begin(), log_wage.end(), raw.begin(), [](double w) { return std::exp(w); });
  LoomSet s = compute_looms(panel.records, raw);
  if (stage_one_log_wages) *stage_one_log_wages = std::move(log_wage);
  return s;
}

void write_looms_csv(const std::filesystem::path& path, std::span<const SpellRecord> records, const LoomSet& looms) {
  csv::Writer w(path);
  w.row({"spell_id", "person_loom", "estab_loom", "occ_loom", "person_support", "estab_support", "occ_support"});
  const auto fmt = [](const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string("NA"); };
  for (std::size_t i = 0; i < records.size(); ++i)
    w.row({records[i].spell_id, fmt(looms.person[i]), fmt(looms.estab[i]), fmt(looms.occ[i]),
           csv::format_double(looms.person_support[i]), csv::format_double(looms.estab_support[i]),
           csv::format_double(looms.occ_support[i])});
}

}  // namespace topimpute
