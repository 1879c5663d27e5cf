#include "topimpute/panel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "topimpute/config.hpp"
#include "topimpute/csv.hpp"

namespace topimpute {

namespace {

constexpr double kLimitTol = 1e-9;

std::string attr_or_star(bool used, const std::string& v) { return used ? v : std::string("*"); }

bool parse_flag(const std::string& s, bool& out) {
  const std::string t = trim(s);
  if (t == "1" || t == "true" || t == "TRUE" || t == "True") {
    out = true;
    return true;
  }
  if (t == "0" || t == "false" || t == "FALSE" || t == "False") {
    out = false;
    return true;
  }
  return false;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '.';
    out += ok ? c : '_';
  }
  return out.empty() ? std::string("na") : out;
}

}  // namespace

CensorRules::CensorRules(std::vector<CensorRule> rules) : rules_(std::move(rules)) {
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const auto& r = rules_[i];
    if (!std::isfinite(r.upper_limit)) throw ConfigError("censor rule with non-finite upper limit");
    if (r.lower_limit && !(*r.lower_limit < r.upper_limit))
      throw ConfigError("censor rule " + std::to_string(r.year) + "/" + r.region + ": lower limit must be below upper");
    if (!index_.emplace(std::make_pair(r.year, r.region), i).second)
      throw ConfigError("duplicate censor rule for " + std::to_string(r.year) + "/" + r.region);
  }
}

const CensorRule* CensorRules::find(int year, const std::string& region) const {
  const auto it = index_.find({year, region});
  return it == index_.end() ? nullptr : &rules_[it->second];
}

const CensorRule& CensorRules::at(int year, const std::string& region) const {
  const CensorRule* r = find(year, region);
  if (!r) throw std::out_of_range("no censor rule for " + std::to_string(year) + "/" + region);
  return *r;
}

CensorRule parse_censor_rule(const std::string& text) {
  const auto parts = split(text, ',');
  if (parts.size() != 3 && parts.size() != 4) throw ConfigError("censor rule must be 'year, region, upper[, lower]'");
  CensorRule r;
  r.year = static_cast<int>(parse_int(parts[0]));
  r.region = parts[1];
  r.upper_limit = parse_double(parts[2]);
  if (parts.size() == 4 && !parts[3].empty()) r.lower_limit = parse_double(parts[3]);
  return r;
}

std::string Schema::column(const std::string& field) const {
  const auto it = columns.find(field);
  return it == columns.end() ? field : it->second;
}

std::size_t IngestReport::rejected() const {
  std::size_t n = 0;
  for (const auto& [_, c] : rejected_by_reason) n += c;
  return n;
}

IngestResult ingest(std::istream& in, const Schema& schema, const CensorRules& rules) {
  csv::Reader reader(in);
  const auto col = [&](const std::string& field, bool mandatory) {
    const std::string name = schema.column(field);
    const int c = reader.column(name);
    if (c < 0 && mandatory) throw ConfigError("input is missing column '" + name + "'");
    return c;
  };
  const int c_spell = col("spell_id", true);
  const int c_person = col("person_id", true);
  const int c_estab = col("estab_id", true);
  const int c_occ = col("occ_id", true);
  const int c_year = col("year", true);
  const int c_region = col("region", true);
  const int c_duration = col("duration", true);
  const int c_wage = col(schema.raw_wages ? "wage" : "log_wage", true);
  const int c_censored = col("censored", false);
  const int c_gender = col("gender", false);
  const int c_age = col("age_group", false);
  const int c_edu = col("education", false);
  std::vector<int> c_cov;
  for (const auto& name : schema.covariates) {
    const int c = reader.column(name);
    if (c < 0) throw ConfigError("input is missing covariate column '" + name + "'");
    c_cov.push_back(c);
  }

  IngestResult out;
  out.panel.covariate_names = schema.covariates;
  auto& report = out.report;
  std::unordered_set<std::string> seen_ids;
  std::vector<std::string> f;
  const auto reject = [&](const char* reason) { ++report.rejected_by_reason[reason]; };
  const std::size_t width = reader.header().size();

  while (reader.next(f)) {
    ++report.rows_read;
    if (f.size() != width) {
      reject("wrong field count");
      continue;
    }
    SpellRecord r;
    try {
      r.spell_id = f[static_cast<std::size_t>(c_spell)];
      r.person_id = f[static_cast<std::size_t>(c_person)];
      r.estab_id = f[static_cast<std::size_t>(c_estab)];
      r.occ_id = f[static_cast<std::size_t>(c_occ)];
      r.year = static_cast<int>(parse_int(f[static_cast<std::size_t>(c_year)]));
      r.region = trim(f[static_cast<std::size_t>(c_region)]);
      r.duration = parse_double(f[static_cast<std::size_t>(c_duration)]);
      r.log_wage = parse_double(f[static_cast<std::size_t>(c_wage)]);
      if (c_gender >= 0) r.gender = trim(f[static_cast<std::size_t>(c_gender)]);
      if (c_age >= 0) r.age_group = trim(f[static_cast<std::size_t>(c_age)]);
      if (c_edu >= 0) r.education = trim(f[static_cast<std::size_t>(c_edu)]);
      r.covariates.reserve(c_cov.size());
      for (int c : c_cov) r.covariates.push_back(parse_double(f[static_cast<std::size_t>(c)]));
    } catch (const ConfigError&) {
      reject("unparseable field");
      continue;
    }
    if (!(r.duration > 0.0) || !std::isfinite(r.duration)) {
      reject("duration <= 0");
      continue;
    }
    if (schema.raw_wages) {
      if (!(r.log_wage > 0.0)) {
        reject("nonpositive raw wage");
        continue;
      }
      r.log_wage = std::log(r.log_wage);
    }
    if (!std::isfinite(r.log_wage)) {
      reject("unparseable field");
      continue;
    }
    const CensorRule* rule = rules.find(r.year, r.region);
    if (!rule) {
      reject("no censor rule");
      continue;
    }
    const double C = rule->upper_limit;
    const bool at_or_above = r.log_wage >= C - kLimitTol;
    if (c_censored >= 0) {
      bool flag = false;
      if (!parse_flag(f[static_cast<std::size_t>(c_censored)], flag)) {
        reject("unparseable field");
        continue;
      }
      if (!flag && at_or_above) {
        reject("uncensored wage above limit");
        continue;
      }
      if (flag && !at_or_above) {
        reject("censored wage below limit");
        continue;
      }
      r.censored = flag;
    } else {
      r.censored = at_or_above;
    }
    if (r.censored) r.log_wage = C;
    if (!seen_ids.insert(r.spell_id).second) {
      reject("duplicate spell_id");
      continue;
    }
    out.panel.records.push_back(std::move(r));
  }
  report.accepted = out.panel.records.size();
  return out;
}

IngestResult ingest(const std::filesystem::path& path, const Schema& schema, const CensorRules& rules) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open input file " + path.string());
  return ingest(in, schema, rules);
}

void write_panel_csv(const std::filesystem::path& path, const Panel& panel) {
  csv::Writer w(path);
  std::vector<std::string> header = {"spell_id", "person_id", "estab_id", "occ_id", "year",
                                     "region",   "gender",    "age_group", "education", "duration",
                                     "log_wage", "censored"};
  header.insert(header.end(), panel.covariate_names.begin(), panel.covariate_names.end());
  w.row(header);
  std::vector<std::string> row;
  for (const auto& r : panel.records) {
    row = {r.spell_id, r.person_id, r.estab_id, r.occ_id, std::to_string(r.year), r.region, r.gender,
           r.age_group, r.education, csv::format_double(r.duration), csv::format_double(r.log_wage),
           r.censored ? "1" : "0"};
    for (double v : r.covariates) row.push_back(csv::format_double(v));
    w.row(row);
  }
}

std::string CellKey::id() const {
  const auto part = [](const std::string& s) { return s == "*" ? std::string("all") : sanitize(s); };
  return std::to_string(year) + "-" + part(region) + "-" + part(gender) + "-" + part(age_group) + "-" +
         part(education_group);
}

CellKey cell_key_of(const SpellRecord& r, const CellSpec& spec) {
  return CellKey{r.year, attr_or_star(spec.by_gender, r.gender), attr_or_star(spec.by_age_group, r.age_group),
                 attr_or_star(spec.by_education, r.education), r.region};
}

CellMap partition(const Panel& panel, const CellSpec& spec) {
  std::map<std::string, std::set<std::string>> declared;
  for (const auto& [attr, lv] : spec.levels)
    if (!lv.empty()) declared[attr] = std::set<std::string>(lv.begin(), lv.end());
  const auto check = [&](const char* attr, const std::string& value, const SpellRecord& r) {
    if (value.empty())
      throw ConfigError("spell " + r.spell_id + " lacks partition attribute '" + attr + "'");
    const auto it = declared.find(attr);
    if (it != declared.end() && !it->second.count(value))
      throw ConfigError("spell " + r.spell_id + ": " + attr + " '" + value + "' is not a declared level");
  };

  CellMap cells;
  for (std::size_t i = 0; i < panel.records.size(); ++i) {
    const auto& r = panel.records[i];
    check("region", r.region, r);
    if (spec.by_gender) check("gender", r.gender, r);
    if (spec.by_age_group) check("age_group", r.age_group, r);
    if (spec.by_education) check("education", r.education, r);
    cells[cell_key_of(r, spec)].push_back(i);
  }
  return cells;
}

double censoring_share(std::span<const SpellRecord> cell) {
  if (cell.empty()) throw std::invalid_argument("censoring_share: empty cell");
  std::size_t c = 0;
  for (const auto& r : cell) c += r.censored ? 1 : 0;
  return static_cast<double>(c) / static_cast<double>(cell.size());
}

double censoring_share(const Panel& panel, std::span<const std::size_t> rows) {
  if (rows.empty()) throw std::invalid_argument("censoring_share: empty cell");
  std::size_t c = 0;
  for (auto i : rows) c += panel.records[i].censored ? 1 : 0;
  return static_cast<double>(c) / static_cast<double>(rows.size());
}

DesignMatrix make_design(Eigen::Index n, bool intercept,
                         const std::vector<std::pair<std::string, Eigen::VectorXd>>& columns,
                         std::vector<std::string>* dropped) {
  std::vector<const std::pair<std::string, Eigen::VectorXd>*> keep;
  for (const auto& c : columns) {
    if (c.second.size() != n) throw std::invalid_argument("make_design: column '" + c.first + "' has wrong length");
    const bool constant = n == 0 || (c.second.array() == c.second(0)).all();
    if (constant && (intercept || c.second.isZero(0.0))) {
      if (dropped) dropped->push_back(c.first);
      continue;
    }
    keep.push_back(&c);
  }
  DesignMatrix d;
  d.includes_intercept = intercept;
  const Eigen::Index p = static_cast<Eigen::Index>(keep.size()) + (intercept ? 1 : 0);
  d.values.resize(n, p);
  Eigen::Index j = 0;
  if (intercept) {
    d.values.col(j++).setOnes();
    d.column_names.push_back("(intercept)");
  }
  for (const auto* c : keep) {
    d.values.col(j++) = c->second;
    d.column_names.push_back(c->first);
  }
  return d;
}

std::vector<std::pair<std::string, Eigen::VectorXd>> covariate_columns(const Panel& panel,
                                                                       std::span<const std::size_t> rows,
                                                                       std::span<const std::string> names) {
  std::vector<std::pair<std::string, Eigen::VectorXd>> out;
  for (const auto& name : names) {
    const auto it = std::find(panel.covariate_names.begin(), panel.covariate_names.end(), name);
    if (it == panel.covariate_names.end()) throw ConfigError("unknown covariate '" + name + "'");
    const auto j = static_cast<std::size_t>(it - panel.covariate_names.begin());
    Eigen::VectorXd v(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) v(static_cast<Eigen::Index>(k)) = panel.records[rows[k]].covariates[j];
    out.emplace_back(name, std::move(v));
  }
  return out;
}

}  // namespace topimpute
