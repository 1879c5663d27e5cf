#include "topimpute/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "topimpute/csv.hpp"
#include "topimpute/estimators.hpp"

namespace topimpute {

namespace {

double limit_for_share(std::vector<double> values, double share) {
  if (share <= 0.0) return *std::max_element(values.begin(), values.end()) + 1.0;
  std::sort(values.begin(), values.end());
  return empirical_quantile_sorted(values, 1.0 - share);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("synthetic config: " + what);
}

std::string age_group_of(double age) {
  if (age < 30.0) return "u30";
  if (age < 40.0) return "30_39";
  if (age < 50.0) return "40_49";
  return "50plus";
}

}  // namespace

std::string regime_name(Regime r) { return r == Regime::tobit ? "tobit" : "location_scale"; }

Regime parse_regime(const std::string& name) {
  if (name == "tobit") return Regime::tobit;
  if (name == "location_scale") return Regime::location_scale;
  throw ConfigError("unknown regime '" + name + "'");
}

CellSample generate_cell(const CellSynthConfig& config) {
  const Eigen::Index p = config.beta.size();
  require(config.n >= 10, "cell needs at least 10 rows");
  require(p >= 1, "beta must include an intercept");
  require(config.target_share >= 0.0 && config.target_share <= 0.95, "target share must lie in [0, 0.95]");
  if (config.regime == Regime::location_scale) {
    require(config.gamma.size() == p, "gamma must have one entry per coefficient");
    require(config.gamma(0) + config.gamma.tail(p - 1).cwiseMin(0.0).sum() > 0.0,
            "x gamma must be positive on the unit cube");
  } else {
    require(config.sigma > 0.0, "sigma must be positive");
  }

  Rng rng(config.seed);
  const Eigen::Index n = static_cast<Eigen::Index>(config.n);
  CellSample s;
  s.spec.design.resize(n, p);
  s.truth.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    s.spec.design(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < p; ++j) s.spec.design(i, j) = rng.uniform();
    const auto x = s.spec.design.row(i);
    const double scale = config.regime == Regime::tobit ? config.sigma : x.dot(config.gamma);
    s.truth(i) = x.dot(config.beta) + scale * rng.normal();
  }
  s.limit = limit_for_share(std::vector<double>(s.truth.data(), s.truth.data() + n), config.target_share);
  s.spec.upper = Eigen::VectorXd::Constant(n, s.limit);
  s.y = s.truth;
  s.state.assign(config.n, CensorState::uncensored);
  for (Eigen::Index i = 0; i < n; ++i)
    if (s.truth(i) >= s.limit) {
      s.y(i) = s.limit;
      s.state[static_cast<std::size_t>(i)] = CensorState::at_upper;
    }
  return s;
}

SynthConfig SynthConfig::from_config(const KeyValueConfig& cfg, const std::string& prefix) {
  SynthConfig c;
  const auto key = [&](const char* k) { return prefix + k; };
  c.n_persons = static_cast<std::size_t>(cfg.get_int(key("persons"), static_cast<long long>(c.n_persons)));
  c.n_estabs = static_cast<std::size_t>(cfg.get_int(key("estabs"), static_cast<long long>(c.n_estabs)));
  c.n_occs = static_cast<std::size_t>(cfg.get_int(key("occs"), static_cast<long long>(c.n_occs)));
  c.first_year = static_cast<int>(cfg.get_int(key("first_year"), c.first_year));
  c.years = static_cast<int>(cfg.get_int(key("years"), c.years));
  c.regime = parse_regime(cfg.get_or(key("regime"), regime_name(c.regime)));
  c.employment_rate = cfg.get_double(key("employment_rate"), c.employment_rate);
  c.second_spell_rate = cfg.get_double(key("second_spell_rate"), c.second_spell_rate);
  c.max_spells_per_year = static_cast<int>(cfg.get_int(key("max_spells_per_year"), c.max_spells_per_year));
  c.person_sd = cfg.get_double(key("person_sd"), c.person_sd);
  c.estab_sd = cfg.get_double(key("estab_sd"), c.estab_sd);
  c.occ_sd = cfg.get_double(key("occ_sd"), c.occ_sd);
  c.noise_sd = cfg.get_double(key("noise_sd"), c.noise_sd);
  c.target_share = cfg.get_double(key("target_share"), c.target_share);
  c.seed = static_cast<std::uint64_t>(cfg.get_int(key("seed"), static_cast<long long>(c.seed)));
  return c;
}

SynthPanel generate(const SynthConfig& c) {
  require(c.n_persons >= 1 && c.n_estabs >= 1 && c.n_occs >= 1, "persons, estabs and occs must be positive");
  require(c.years >= 1, "years must be positive");
  require(!c.regions.empty(), "at least one region is required");
  require(c.max_spells_per_year >= 1 && c.max_spells_per_year <= 12, "spells per year must lie in [1, 12]");
  require(c.employment_rate > 0.0 && c.employment_rate <= 1.0, "employment rate must lie in (0, 1]");
  require(c.second_spell_rate >= 0.0 && c.second_spell_rate <= 1.0, "second spell rate must lie in [0, 1]");
  require(c.east_share >= 0.0 && c.east_share <= 1.0, "east share must lie in [0, 1]");
  require(c.target_share >= 0.0 && c.target_share <= 0.95, "target share must lie in [0, 0.95]");
  require(c.beta.size() == 5, "beta needs 5 entries");
  require(c.regime == Regime::tobit || c.gamma.size() == 3, "gamma needs 3 entries");
  require(c.person_sd >= 0.0 && c.estab_sd >= 0.0 && c.occ_sd >= 0.0 && c.noise_sd > 0.0, "invalid effect sd");

  Rng rng(c.seed);
  const auto region_draw = [&]() -> const std::string& {
    if (c.regions.size() == 1) return c.regions[0];
    if (c.regions.size() == 2) return c.regions[rng.uniform() < c.east_share ? 1 : 0];
    return c.regions[rng.below(c.regions.size())];
  };

  struct Estab {
    std::string region;
    double log_size;
    double effect;
  };
  std::vector<Estab> estabs(c.n_estabs);
  std::map<std::string, std::vector<std::size_t>> estabs_in;
  for (std::size_t e = 0; e < c.n_estabs; ++e) {
    estabs[e].region = region_draw();
    estabs[e].log_size = std::clamp(3.0 + 1.2 * rng.normal(), 0.0, 9.0);
    estabs[e].effect = c.estab_sd * rng.normal();
    estabs_in[estabs[e].region].push_back(e);
  }
  std::vector<double> occ_effect(c.n_occs);
  for (double& o : occ_effect) o = c.occ_sd * rng.normal();

  static const char* kEdu[] = {"low", "vocational", "upper", "tertiary"};
  static const double kEduEffect[] = {-0.15, 0.0, 0.2, 0.35};

  SynthPanel out;
  out.panel.covariate_names = kSynthCovariates;
  std::size_t spell_no = 0;
  for (std::size_t p = 0; p < c.n_persons; ++p) {
    const std::string& region = region_draw();
    const bool female = rng.uniform() < 0.5;
    const double age0 = 20.0 + 40.0 * rng.uniform();
    const double u_edu = rng.uniform();
    const int edu = u_edu < 0.15 ? 0 : (u_edu < 0.70 ? 1 : (u_edu < 0.90 ? 2 : 3));
    const double person_effect = c.person_sd * rng.normal() + kEduEffect[edu];
    const auto& pool = estabs_in.count(region) ? estabs_in.at(region) : estabs_in.begin()->second;
    std::size_t home = pool[rng.below(pool.size())];
    std::size_t occ = rng.below(c.n_occs);
    const int forced_year = static_cast<int>(rng.below(static_cast<std::uint64_t>(c.years)));

    for (int k = 0; k < c.years; ++k) {
      const bool works = rng.uniform() < c.employment_rate || k == forced_year;
      if (rng.uniform() < 0.15) home = pool[rng.below(pool.size())];
      if (rng.uniform() < 0.05) occ = rng.below(c.n_occs);
      if (!works) continue;
      int spells = 1;
      for (int extra = 1; extra < c.max_spells_per_year; ++extra) spells += rng.uniform() < c.second_spell_rate ? 1 : 0;
      // Split the year into `spells` consecutive spells of at least 10 days.
      std::vector<double> cut{0.0, 365.0};
      for (int s = 1; s < spells; ++s) cut.push_back(std::floor(10.0 + 345.0 * rng.uniform()));
      std::sort(cut.begin(), cut.end());
      for (int s = 0; s < spells; ++s) {
        const std::size_t estab = s == 0 ? home : pool[rng.below(pool.size())];
        const double age = age0 + k;
        SpellRecord r;
        r.spell_id = "s" + std::to_string(spell_no++);
        r.person_id = "p" + std::to_string(p);
        r.estab_id = "e" + std::to_string(estab);
        r.occ_id = "o" + std::to_string(occ);
        r.year = c.first_year + k;
        r.region = region;
        r.gender = female ? "f" : "m";
        r.age_group = age_group_of(age);
        r.education = kEdu[edu];
        r.duration = std::max(1.0, cut[static_cast<std::size_t>(s) + 1] - cut[static_cast<std::size_t>(s)]);
        const double a10 = age / 10.0;
        const double ls = estabs[estab].log_size;
        r.covariates = {a10, a10 * a10, ls, female ? 1.0 : 0.0};
        const Eigen::Map<const Eigen::VectorXd> x(r.covariates.data(), 4);
        double mean = c.beta(0) + c.beta.tail(4).dot(x) + person_effect + estabs[estab].effect + occ_effect[occ] +
                      c.year_trend * k;
        double scale = c.noise_sd;
        if (c.regime == Regime::location_scale)
          scale = std::max(0.05, c.gamma(0) + c.gamma(1) * (a10 - 4.0) + c.gamma(2) * (ls - 3.0));
        out.truth.push_back(mean + scale * rng.normal());
        out.panel.records.push_back(std::move(r));
      }
    }
  }

  std::map<std::pair<int, std::string>, std::vector<double>> by_group;
  for (std::size_t i = 0; i < out.truth.size(); ++i)
    by_group[{out.panel.records[i].year, out.panel.records[i].region}].push_back(out.truth[i]);
  std::vector<CensorRule> rules;
  std::map<std::pair<int, std::string>, double> limit;
  for (auto& [key, values] : by_group) {
    const double C = limit_for_share(values, c.target_share);
    limit[key] = C;
    rules.push_back({key.first, key.second, C, std::nullopt});
  }
  out.rules = CensorRules(std::move(rules));
  for (std::size_t i = 0; i < out.truth.size(); ++i) {
    auto& r = out.panel.records[i];
    const double C = limit.at({r.year, r.region});
    r.censored = out.truth[i] >= C;
    r.log_wage = r.censored ? C : out.truth[i];
  }
  return out;
}

void write_truth_csv(const std::filesystem::path& path, const Panel& panel, const std::vector<double>& truth) {
  if (truth.size() != panel.records.size()) throw std::invalid_argument("write_truth_csv: size mismatch");
  csv::Writer w(path);
  w.row({"spell_id", "true_log_wage"});
  for (std::size_t i = 0; i < truth.size(); ++i) w.row({panel.records[i].spell_id, csv::format_double(truth[i])});
}

std::map<std::string, double> read_truth_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open truth file " + path.string());
  csv::Reader reader(in);
  const int c_id = reader.column("spell_id");
  const int c_w = reader.column("true_log_wage");
  if (c_id < 0 || c_w < 0) throw ConfigError("truth file needs columns spell_id, true_log_wage");
  std::map<std::string, double> out;
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() != reader.header().size()) throw ConfigError("truth file: wrong field count");
    if (!out.emplace(f[static_cast<std::size_t>(c_id)], parse_double(f[static_cast<std::size_t>(c_w)])).second)
      throw ConfigError("truth file: duplicate spell_id " + f[static_cast<std::size_t>(c_id)]);
  }
  return out;
}

void write_rules(const std::filesystem::path& path, const CensorRules& rules) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (const auto& r : rules.rules()) {
    out << "rule = " << r.year << ", " << r.region << ", " << csv::format_double(r.upper_limit);
    if (r.lower_limit) out << ", " << csv::format_double(*r.lower_limit);
    out << "\n";
  }
}

}  // namespace topimpute
