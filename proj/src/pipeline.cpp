#include "topimpute/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "topimpute/csv.hpp"
#include "topimpute/rng.hpp"
#include "topimpute/synthgen.hpp"

#ifndef TOPIMPUTE_VERSION
#define TOPIMPUTE_VERSION "unknown"
#endif

namespace topimpute {

namespace fs = std::filesystem;

// ---- configuration -------------------------------------------------------------

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path q(p);
  return q.is_absolute() ? q : base / q;
}

void read_rule_lines(const std::vector<std::string>& lines, std::vector<CensorRule>& out) {
  for (const auto& l : lines) out.push_back(parse_censor_rule(l));
}

std::vector<CensorRule> read_rules_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open rules file " + path.string());
  std::vector<CensorRule> rules;
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq != std::string::npos) {
      if (trim(t.substr(0, eq)) != "rule") throw ConfigError("rules file: unexpected line '" + t + "'");
      t = trim(t.substr(eq + 1));
    }
    rules.push_back(parse_censor_rule(t));
  }
  return rules;
}

}  // namespace

PipelineConfig PipelineConfig::from_config(const KeyValueConfig& cfg, const fs::path& base_dir) {
  PipelineConfig c;
  if (cfg.has("input")) c.input = resolve(base_dir, cfg.get("input"));
  if (cfg.has("truth")) c.truth = resolve(base_dir, cfg.get("truth"));
  c.output_dir = resolve(base_dir, cfg.get_or("output_dir", "out"));

  for (const auto& [key, value] : cfg.entries())
    if (key.rfind("column.", 0) == 0) c.schema.columns[key.substr(7)] = value;
  c.schema.covariates = cfg.get_list("covariates");
  c.schema.raw_wages = cfg.get_bool("raw_wages", false);

  std::vector<CensorRule> rules;
  read_rule_lines(cfg.get_all("rule"), rules);
  if (cfg.has("rules_file")) {
    auto more = read_rules_file(resolve(base_dir, cfg.get("rules_file")));
    rules.insert(rules.end(), more.begin(), more.end());
  }
  c.rules = CensorRules(std::move(rules));

  if (cfg.has("cells")) {
    const auto attrs = cfg.get_list("cells");
    c.cells.by_gender = c.cells.by_age_group = c.cells.by_education = false;
    for (const auto& a : attrs) {
      if (a == "gender") c.cells.by_gender = true;
      else if (a == "age_group") c.cells.by_age_group = true;
      else if (a == "education") c.cells.by_education = true;
      else if (a != "none" && a != "year" && a != "region")
        throw ConfigError("cells: unknown attribute '" + a + "'");
    }
  }
  for (const auto& [key, value] : cfg.entries())
    if (key.rfind("levels.", 0) == 0) {
      const std::string attr = key.substr(7);
      if (attr != "gender" && attr != "age_group" && attr != "education" && attr != "region")
        throw ConfigError("unknown levels attribute '" + attr + "'");
      c.cells.levels[attr] = cfg.get_list(key);
    }

  if (cfg.has("methods")) {
    c.methods.methods.clear();
    for (const auto& m : cfg.get_list("methods")) c.methods.methods.push_back(parse_method_spec(m));
    if (c.methods.methods.empty()) throw ConfigError("methods: the method set is empty");
  }
  c.methods.cqr.delta = cfg.get_double("cqr.delta", c.methods.cqr.delta);
  c.methods.cqr.zeta_scale = cfg.get_double("cqr.zeta", c.methods.cqr.zeta_scale);
  if (cfg.has("cqr.resid_sd")) c.methods.resid_sd = parse_double(cfg.get("cqr.resid_sd"));
  c.methods.extrapolation.penalty = cfg.get_double("extrapolation.penalty", c.methods.extrapolation.penalty);
  c.methods.extrapolation.min_quantile =
      cfg.get_double("extrapolation.min_quantile", c.methods.extrapolation.min_quantile);
  c.methods.extrapolation.inverted_weights =
      cfg.get_bool("extrapolation.inverted_weights", c.methods.extrapolation.inverted_weights);
  c.methods.window.lower_factor = cfg.get_double("sad.lower", c.methods.window.lower_factor);
  c.methods.window.upper_factor = cfg.get_double("sad.upper", c.methods.window.upper_factor);
  c.methods.window.step = cfg.get_double("sad.step", c.methods.window.step);
  if (cfg.has("sad.bandwidth")) c.methods.bandwidth = parse_double(cfg.get("sad.bandwidth"));

  c.eval_covariates = cfg.has("eval_covariates") ? cfg.get_list("eval_covariates") : c.schema.covariates;
  c.use_looms = cfg.get_bool("looms", true);
  c.min_uncensored = static_cast<std::size_t>(cfg.get_int("min_uncensored", 200));
  c.max_censor_share = cfg.get_double("max_censor_share", c.max_censor_share);
  c.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  c.jobs = static_cast<int>(cfg.get_int("jobs", 1));
  c.draws = static_cast<int>(cfg.get_int("draws", 1));
  c.density_lower = cfg.get_double("density.lower", c.density_lower);
  c.density_upper = cfg.get_double("density.upper", c.density_upper);
  c.density_step = cfg.get_double("density.step", c.density_step);

  if (c.jobs < 1) throw ConfigError("jobs must be at least 1");
  if (c.draws < 1) throw ConfigError("draws must be at least 1");
  if (!(c.max_censor_share > 0.0 && c.max_censor_share <= 1.0)) throw ConfigError("max_censor_share must lie in (0, 1]");
  if (!(c.methods.window.step > 0.0) || !(c.density_step > 0.0)) throw ConfigError("grid steps must be positive");
  if (!(c.density_lower < c.density_upper)) throw ConfigError("density.lower must be below density.upper");
  if (c.methods.bandwidth && !(*c.methods.bandwidth > 0.0)) throw ConfigError("sad.bandwidth must be positive");
  if (c.methods.resid_sd && !(*c.methods.resid_sd > 0.0)) throw ConfigError("cqr.resid_sd must be positive");

  // Thread count and output location do not change any result, so they stay
  // out of the hash.
  KeyValueConfig canon;
  for (const auto& [key, value] : cfg.entries())
    if (key != "jobs" && key != "output_dir") canon.add(key, value);
  c.canonical = canon.to_string();
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  return from_config(KeyValueConfig::load(path), base);
}

std::string cell_status_name(CellStatus s) {
  switch (s) {
    case CellStatus::imputed: return "imputed";
    case CellStatus::no_censoring: return "no_censoring";
    case CellStatus::unfittable: return "unfittable";
  }
  return "unknown";
}

std::size_t ImputationRun::unfittable_cells() const {
  return static_cast<std::size_t>(
      std::count_if(cells.begin(), cells.end(), [](const CellReport& c) { return c.status == CellStatus::unfittable; }));
}

IngestResult load_input(const PipelineConfig& config) {
  if (config.input.empty()) throw ConfigError("no input file configured");
  if (!fs::exists(config.input)) throw ConfigError("input file not found: " + config.input.string());
  if (config.rules.empty()) throw ConfigError("no censoring rules configured");
  return ingest(config.input, config.schema, config.rules);
}

// ---- imputation ------------------------------------------------------------------

namespace {

/// Runs body(i) for i in [0, n) on up to `jobs` threads. Each index writes
/// only its own slot, so the result is independent of scheduling.
template <class F>
void parallel_for(std::size_t n, int jobs, F&& body) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w)
    threads.emplace_back([&]() {
      for (std::size_t i = next++; i < n; i = next++) body(i);
    });
  for (auto& t : threads) t.join();
}

struct CellInput {
  TobitSpec spec;
  Eigen::VectorXd y;
  std::vector<CensorState> state;
  std::vector<std::string> names;
};

CellInput cell_input(const Panel& panel, const std::vector<std::size_t>& rows, const std::vector<std::string>& covs,
                     double limit, const std::vector<std::pair<std::string, Eigen::VectorXd>>& extra = {}) {
  CellInput in;
  const auto n = static_cast<Eigen::Index>(rows.size());
  auto columns = covariate_columns(panel, rows, covs);
  columns.insert(columns.end(), extra.begin(), extra.end());
  DesignMatrix d = make_design(n, true, columns);
  in.spec.design = std::move(d.values);
  in.names = std::move(d.column_names);
  in.spec.upper = Eigen::VectorXd::Constant(n, limit);
  in.y.resize(n);
  in.state.resize(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = panel.records[rows[k]];
    in.y(static_cast<Eigen::Index>(k)) = r.log_wage;
    in.state[k] = r.censored ? CensorState::at_upper : CensorState::uncensored;
  }
  return in;
}

/// LOOM columns of one cell; a missing value becomes the cell's
/// duration-weighted mean wage (log of the raw-scale mean), flagged by an
/// indicator column. An indicator is kept only when it varies within both the
/// censored and the uncensored rows; otherwise it would separate the probit
/// or make the uncensored design singular.
std::vector<std::pair<std::string, Eigen::VectorXd>> loom_columns(const Panel& panel,
                                                                  const std::vector<std::size_t>& rows,
                                                                  const LoomSet& looms,
                                                                  const std::vector<double>& stage_wages) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  double num = 0.0, den = 0.0;
  for (auto i : rows) {
    num += std::exp(stage_wages[i]) * panel.records[i].duration;
    den += panel.records[i].duration;
  }
  const double fill = std::log(num / den);
  std::vector<std::pair<std::string, Eigen::VectorXd>> out;
  const std::pair<const char*, const std::vector<std::optional<double>>*> kinds[] = {
      {"person_loom", &looms.person}, {"estab_loom", &looms.estab}, {"occ_loom", &looms.occ}};
  for (const auto& [name, values] : kinds) {
    Eigen::VectorXd v(n), miss(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto& o = (*values)[rows[static_cast<std::size_t>(k)]];
      v(k) = o ? *o : fill;
      miss(k) = o ? 0.0 : 1.0;
    }
    out.emplace_back(name, v);
    int seen[2][2] = {{0, 0}, {0, 0}};  // [censored][flag]
    for (Eigen::Index k = 0; k < n; ++k)
      seen[panel.records[rows[static_cast<std::size_t>(k)]].censored][miss(k) > 0.5] = 1;
    if (seen[0][0] && seen[0][1] && seen[1][0] && seen[1][1]) out.emplace_back(std::string(name) + "_missing", miss);
  }
  return out;
}

/// The cell design exactly as the imputation built it.
CellInput rebuild_cell_input(const PipelineConfig& config, const ImputationRun& run, const CellReport& rep) {
  const auto extra = config.use_looms ? loom_columns(run.panel, rep.rows, run.looms, run.stage_one_log_wages)
                                      : std::vector<std::pair<std::string, Eigen::VectorXd>>{};
  return cell_input(run.panel, rep.rows, config.schema.covariates, rep.limit, extra);
}

}  // namespace

ImputationRun run_imputation(const PipelineConfig& config, const Panel& panel) {
  ImputationRun run;
  run.panel = panel;
  const CellMap cells = partition(panel, config.cells);
  for (const auto& [key, rows] : cells) {
    CellReport rep;
    rep.key = key;
    rep.rows = rows;
    const CensorRule* rule = config.rules.find(key.year, key.region);
    if (!rule) throw ConfigError("no censoring rule for " + std::to_string(key.year) + "/" + key.region);
    rep.limit = rule->upper_limit;
    for (auto i : rows) rep.censored += panel.records[i].censored;
    run.cells.push_back(std::move(rep));
  }
  const std::size_t G = run.cells.size();

  const auto screen = [&](CellReport& rep) {
    const std::size_t n = rep.rows.size();
    if (rep.censored == 0) {
      rep.status = CellStatus::no_censoring;
      rep.message = "no censored rows";
      return false;
    }
    const double share = static_cast<double>(rep.censored) / static_cast<double>(n);
    if (share > config.max_censor_share) {
      rep.message = "censoring share " + csv::format_double(share) + " exceeds max_censor_share";
      return false;
    }
    if (n - rep.censored < config.min_uncensored) {
      rep.message = "fewer than " + std::to_string(config.min_uncensored) + " uncensored rows";
      return false;
    }
    return true;
  };
  std::vector<bool> fittable(G);
  for (std::size_t g = 0; g < G; ++g) fittable[g] = screen(run.cells[g]);

  // Stage one: right-censored Tobit on the covariates only.
  std::vector<std::optional<std::vector<double>>> stage_one(G);
  if (config.use_looms) {
    parallel_for(G, config.jobs, [&](std::size_t g) {
      CellReport& rep = run.cells[g];
      if (!fittable[g]) return;
      try {
        const CellInput in = cell_input(panel, rep.rows, config.schema.covariates, rep.limit);
        FitResult fit = fit_tobit(in.spec, in.y, in.state);
        std::vector<Eigen::Index> cens;
        for (std::size_t k = 0; k < rep.rows.size(); ++k)
          if (in.state[k] == CensorState::at_upper) cens.push_back(static_cast<Eigen::Index>(k));
        Rng rng = substream(config.seed, rep.key.id() + "/stage1");
        const auto draws = impute_tobit(fit, in.spec.design, in.spec.upper, cens, rng);
        std::vector<double> w(in.y.data(), in.y.data() + in.y.size());
        for (std::size_t k = 0; k < cens.size(); ++k) w[static_cast<std::size_t>(cens[k])] = draws[k];
        stage_one[g] = std::move(w);
        rep.stage_one = std::move(fit);
        rep.stage_one_columns = in.names;
      } catch (const std::exception& e) {
        rep.message = std::string("stage one: ") + e.what();
      }
    });
  }

  std::vector<double> stage_wages;
  if (config.use_looms) {
    std::map<CellKey, std::size_t> index;
    for (std::size_t g = 0; g < G; ++g) index[run.cells[g].key] = g;
    run.looms = two_stage_looms(
        panel, cells, [&](const CellKey& key, std::span<const std::size_t>) { return *stage_one[index.at(key)]; },
        &stage_wages, [&](const CellKey& key) { return !stage_one[index.at(key)].has_value(); });
    run.stage_one_log_wages = stage_wages;
  }

  // Every method on every fittable cell.
  parallel_for(G, config.jobs, [&](std::size_t g) {
    CellReport& rep = run.cells[g];
    if (!fittable[g] || (config.use_looms && !stage_one[g])) return;
    try {
      const CellInput in = rebuild_cell_input(config, run, rep);
      rep.design_columns = in.names;
      rep.y = in.y;
      CellMethodOptions opts = config.methods;
      if (const CensorRule* rule = config.rules.find(rep.key.year, rep.key.region); rule && rule->lower_limit)
        opts.lower_limit = rule->lower_limit;
      rep.outcome = run_cell_methods(in.spec, in.y, in.state, opts, config.seed, rep.key.id());
      if (rep.outcome.selection) {
        rep.chosen = rep.outcome.selection->chosen;
        rep.status = CellStatus::imputed;
      } else {
        rep.message = rep.outcome.selection_error;
      }
    } catch (const std::exception& e) {
      rep.message = e.what();
    }
  });

  // Assemble per-record output.
  const std::size_t N = panel.records.size();
  run.imputed.resize(N);
  run.method_used.assign(N, "none");
  run.cell_id.resize(N);
  run.extra_draws.assign(N, std::vector<double>(static_cast<std::size_t>(config.draws - 1)));
  for (std::size_t i = 0; i < N; ++i) run.imputed[i] = panel.records[i].log_wage;
  for (auto& rep : run.cells) {
    const std::string id = rep.key.id();
    for (auto i : rep.rows) {
      run.cell_id[i] = id;
      for (auto& d : run.extra_draws[i]) d = panel.records[i].log_wage;
    }
    if (rep.status != CellStatus::imputed) continue;
    const MethodOutcome& m = rep.outcome.methods.at(*rep.chosen);
    const auto& cr = rep.outcome.censored_rows;
    for (std::size_t k = 0; k < cr.size(); ++k) run.imputed[rep.rows[static_cast<std::size_t>(cr[k])]] = m.imputed[k];
    for (auto i : rep.rows) run.method_used[i] = method_name(*rep.chosen);
  }

  // Optional further draws from the selected method of each cell.
  if (config.draws > 1) {
    parallel_for(G, config.jobs, [&](std::size_t g) {
      const CellReport& rep = run.cells[g];
      if (rep.status != CellStatus::imputed) return;
      const CellInput in = rebuild_cell_input(config, run, rep);
      CellMethodOptions opts = config.methods;
      opts.methods = {rep.outcome.methods.at(*rep.chosen).spec};
      if (const CensorRule* rule = config.rules.find(rep.key.year, rep.key.region); rule && rule->lower_limit)
        opts.lower_limit = rule->lower_limit;
      for (int d = 2; d <= config.draws; ++d) {
        const CellOutcome o =
            run_cell_methods(in.spec, in.y, in.state, opts, config.seed, rep.key.id() + "/draw" + std::to_string(d));
        const auto& mo = o.methods.at(*rep.chosen);
        for (std::size_t k = 0; k < o.censored_rows.size(); ++k)
          run.extra_draws[rep.rows[static_cast<std::size_t>(o.censored_rows[k])]][static_cast<std::size_t>(d - 2)] =
              mo.ok ? mo.imputed[k] : NAN;
      }
    });
  }
  return run;
}

// ---- outputs ---------------------------------------------------------------------

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return hex64(fnv1a64(s.str()));
}

void ensure_dir(const fs::path& d) {
  std::error_code ec;
  fs::create_directories(d, ec);
  if (!fs::is_directory(d)) throw ConfigError("cannot create output directory " + d.string());
}

void write_imputed_csv(const fs::path& path, const ImputationRun& run, int draws) {
  csv::Writer w(path);
  std::vector<std::string> header = {"spell_id", "person_id", "estab_id", "occ_id", "year", "region", "gender",
                                     "age_group", "education", "duration", "log_wage", "censored"};
  header.insert(header.end(), run.panel.covariate_names.begin(), run.panel.covariate_names.end());
  header.insert(header.end(), {"cell_id", "imputed_log_wage", "method_used"});
  for (int d = 2; d <= draws; ++d) header.push_back("imputed_log_wage_" + std::to_string(d));
  w.row(header);
  std::vector<std::string> row;
  for (std::size_t i = 0; i < run.panel.records.size(); ++i) {
    const auto& r = run.panel.records[i];
    row = {r.spell_id, r.person_id, r.estab_id, r.occ_id, std::to_string(r.year), r.region, r.gender,
           r.age_group, r.education, csv::format_double(r.duration), csv::format_double(r.log_wage),
           r.censored ? "1" : "0"};
    for (double v : r.covariates) row.push_back(csv::format_double(v));
    row.push_back(run.cell_id[i]);
    row.push_back(csv::format_double(run.imputed[i]));
    row.push_back(run.method_used[i]);
    for (double v : run.extra_draws[i]) row.push_back(std::isnan(v) ? "NA" : csv::format_double(v));
    w.row(row);
  }
}

void write_selection_csv(const fs::path& path, const ImputationRun& run, const PipelineConfig& config) {
  csv::Writer w(path);
  std::vector<std::string> header = {"cell_id", "year", "region", "gender", "age_group", "education", "n",
                                     "censored", "censor_share", "limit", "bandwidth", "g_min", "g_max", "step"};
  for (const auto& m : config.methods.methods) header.push_back("sad_" + method_name(m.method));
  header.insert(header.end(), {"chosen", "status", "message"});
  w.row(header);
  for (const auto& rep : run.cells) {
    const auto n = rep.rows.size();
    std::vector<std::string> row = {rep.key.id(),
                                    std::to_string(rep.key.year),
                                    rep.key.region,
                                    rep.key.gender,
                                    rep.key.age_group,
                                    rep.key.education_group,
                                    std::to_string(n),
                                    std::to_string(rep.censored),
                                    csv::format_double(static_cast<double>(rep.censored) / static_cast<double>(n)),
                                    csv::format_double(rep.limit)};
    const auto& sel = rep.outcome.selection;
    if (sel) {
      const DensityGrid g = window_grid(rep.limit, config.methods.window);
      row.insert(row.end(), {csv::format_double(sel->bandwidth), csv::format_double(g.g_min),
                             csv::format_double(g.g_max), csv::format_double(g.step)});
    } else {
      row.insert(row.end(), {"NA", "NA", "NA", "NA"});
    }
    for (const auto& m : config.methods.methods) {
      std::string v = "NA";
      if (sel) {
        const auto it = sel->scores.find(m.method);
        if (it != sel->scores.end() && it->second) v = csv::format_double(*it->second);
      }
      row.push_back(v);
    }
    row.push_back(rep.chosen ? method_name(*rep.chosen) : "none");
    row.push_back(cell_status_name(rep.status));
    row.push_back(rep.message);
    w.row(row);
  }
}

nlohmann::ordered_json fit_json(const FitResult& f, const std::vector<std::string>& names) {
  nlohmann::ordered_json j;
  const Eigen::VectorXd se = f.std_errors();
  nlohmann::ordered_json coefs = nlohmann::ordered_json::array();
  for (Eigen::Index k = 0; k < f.coefficients.size(); ++k) {
    nlohmann::ordered_json c;
    c["name"] = static_cast<std::size_t>(k) < names.size() ? names[static_cast<std::size_t>(k)] : std::to_string(k);
    c["estimate"] = f.coefficients(k);
    if (se.size() == f.coefficients.size()) c["std_error"] = se(k);
    coefs.push_back(c);
  }
  j["coefficients"] = coefs;
  if (f.resid_var) j["sigma"] = std::sqrt(*f.resid_var);
  j["loglik"] = f.loglik;
  j["converged"] = f.converged;
  j["iterations"] = f.iterations;
  return j;
}

void write_fits_json(const fs::path& path, const ImputationRun& run, const PipelineConfig& config) {
  nlohmann::ordered_json root;
  root["version"] = TOPIMPUTE_VERSION;
  root["seed"] = config.seed;
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const auto& rep : run.cells) {
    nlohmann::ordered_json c;
    c["cell_id"] = rep.key.id();
    c["status"] = cell_status_name(rep.status);
    c["n"] = rep.rows.size();
    c["censored"] = rep.censored;
    c["limit"] = rep.limit;
    c["chosen"] = rep.chosen ? method_name(*rep.chosen) : "none";
    if (!rep.message.empty()) c["message"] = rep.message;
    c["design_columns"] = rep.design_columns;
    if (rep.stage_one) {
      c["stage_one"] = fit_json(*rep.stage_one, rep.stage_one_columns);
    }
    nlohmann::ordered_json methods = nlohmann::ordered_json::object();
    for (const auto& [m, out] : rep.outcome.methods) {
      nlohmann::ordered_json mj;
      mj["spec"] = method_spec_name(out.spec);
      mj["ok"] = out.ok;
      if (!out.ok) mj["error"] = out.error;
      if (out.fit) mj["fit"] = fit_json(*out.fit, rep.design_columns);
      if (out.q_c) mj["q_c"] = *out.q_c;
      if (out.lower_limit) mj["lower_limit"] = *out.lower_limit;
      mj["fallback_count"] = out.fallback_count;
      methods[method_name(m)] = mj;
    }
    c["methods"] = methods;
    c["support_violations"] = rep.outcome.support_violations;
    cells.push_back(c);
  }
  root["cells"] = cells;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << root.dump(2) << "\n";
}

void write_manifest(const fs::path& dir, const std::string& command, const PipelineConfig& config,
                    const ImputationRun& run, const std::vector<std::string>& files) {
  std::ofstream out(dir / "manifest.txt", std::ios::binary);
  if (!out) throw ConfigError("cannot write manifest");
  std::size_t by_status[3] = {0, 0, 0};
  std::size_t fallbacks = 0, violations = 0;
  for (const auto& rep : run.cells) {
    ++by_status[static_cast<int>(rep.status)];
    violations += rep.outcome.support_violations;
    if (rep.chosen) fallbacks += rep.outcome.methods.at(*rep.chosen).fallback_count;
  }
  out << "topimpute " << TOPIMPUTE_VERSION << "\n";
  out << "command = " << command << "\n";
  out << "config_hash = " << hex64(fnv1a64(config.canonical)) << "\n";
  out << "input_hash = " << file_hash(config.input) << "\n";
  out << "seed = " << config.seed << "\n";
  out << "records = " << run.panel.records.size() << "\n";
  out << "cells = " << run.cells.size() << "\n";
  out << "cells_imputed = " << by_status[0] << "\n";
  out << "cells_no_censoring = " << by_status[1] << "\n";
  out << "cells_unfittable = " << by_status[2] << "\n";
  out << "fallback_rows = " << fallbacks << "\n";
  out << "support_violations = " << violations << "\n";
  out << "eigen = " << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "." << EIGEN_MINOR_VERSION << "\n";
  for (const auto& f : files) out << "file " << f << " = " << file_hash(dir / f) << "\n";
}

ImputationRun impute_from_config(const PipelineConfig& config) {
  const IngestResult in = load_input(config);
  return run_imputation(config, in.panel);
}

int exit_code(const ImputationRun& run) { return run.unfittable_cells() > 0 ? 2 : 0; }

std::map<std::string, double> load_truth(const PipelineConfig& config, const Panel& panel, std::vector<double>& out) {
  if (!config.truth) throw ConfigError("no truth file configured");
  auto truth = read_truth_csv(*config.truth);
  out.resize(panel.records.size());
  for (std::size_t i = 0; i < panel.records.size(); ++i) {
    const auto it = truth.find(panel.records[i].spell_id);
    if (it == truth.end()) throw ConfigError("truth file lacks spell " + panel.records[i].spell_id);
    out[i] = it->second;
  }
  if (truth.size() != panel.records.size())
    throw ConfigError("truth file has " + std::to_string(truth.size()) + " spells, input has " +
                      std::to_string(panel.records.size()));
  return truth;
}

}  // namespace

int run_impute(const PipelineConfig& config) {
  const ImputationRun run = impute_from_config(config);
  ensure_dir(config.output_dir);
  write_imputed_csv(config.output_dir / "imputed.csv", run, config.draws);
  write_selection_csv(config.output_dir / "selection.csv", run, config);
  write_fits_json(config.output_dir / "fits.json", run, config);
  write_manifest(config.output_dir, "impute", config, run, {"imputed.csv", "selection.csv", "fits.json"});
  return exit_code(run);
}

int run_evaluate(const PipelineConfig& config) {
  const ImputationRun run = impute_from_config(config);
  std::vector<double> truth;
  load_truth(config, run.panel, truth);
  ensure_dir(config.output_dir);
  write_imputed_csv(config.output_dir / "imputed.csv", run, config.draws);
  write_selection_csv(config.output_dir / "selection.csv", run, config);
  write_fits_json(config.output_dir / "fits.json", run, config);

  std::vector<Method> methods;
  for (Method m : kAllMethods)
    for (const auto& s : config.methods.methods)
      if (s.method == m) methods.push_back(m);

  std::ofstream metrics(config.output_dir / "metrics.csv", std::ios::binary);
  if (!metrics) throw ConfigError("cannot write metrics.csv");
  write_metrics_header(metrics, methods);

  // Agreement of the SAD choice with the best value of each metric.
  static const char* kMetricNames[] = {"MSE_pred", "MAE_pred", "MSD_coef", "MAD_coef", "KL_div", "Dev_Q90", "Dev_Q99"};
  std::size_t compared[7] = {}, agreed[7] = {};

  for (const auto& rep : run.cells) {
    if (rep.status != CellStatus::imputed) continue;
    std::vector<double> t;
    for (auto i : rep.rows) t.push_back(truth[i]);
    const CellInput eval = cell_input(run.panel, rep.rows, config.eval_covariates, rep.limit);
    std::map<Method, MetricsReport> reports;
    for (const auto& [m, out] : rep.outcome.methods) {
      if (!out.ok) continue;
      const Eigen::VectorXd c = rep.outcome.completed(rep.y, m);
      const std::vector<double> imp(c.data(), c.data() + c.size());
      MetricsReport r;
      try {
        r.regression = regression_metrics(t, imp, eval.spec.design);
        r.distribution = distribution_metrics(t, imp);
      } catch (const std::exception&) {
        continue;
      }
      r.sad = rep.outcome.selection->scores.at(m);
      reports[m] = r;
    }
    write_metrics_block(metrics, rep.key.id(), methods, reports);
    if (reports.size() < 2 || !reports.count(*rep.chosen)) continue;
    const auto value = [](const MetricsReport& r, int k) {
      switch (k) {
        case 0: return r.regression.mse_pred;
        case 1: return r.regression.mae_pred;
        case 2: return r.regression.msd_coef;
        case 3: return r.regression.mad_coef;
        case 4: return r.distribution.kl_div;
        case 5: return std::abs(r.distribution.dev_q90);
        default: return std::abs(r.distribution.dev_q99);
      }
    };
    for (int k = 0; k < 7; ++k) {
      double best = INFINITY;
      for (const auto& [m, r] : reports) best = std::min(best, value(r, k));
      ++compared[k];
      agreed[k] += value(reports.at(*rep.chosen), k) <= best;
    }
  }
  metrics.close();

  {
    csv::Writer w(config.output_dir / "agreement.csv");
    w.row({"metric", "cells", "agree", "fraction"});
    for (int k = 0; k < 7; ++k)
      w.row({kMetricNames[k], std::to_string(compared[k]), std::to_string(agreed[k]),
             compared[k] ? csv::format_double(static_cast<double>(agreed[k]) / static_cast<double>(compared[k]))
                         : "NA"});
  }
  write_manifest(config.output_dir, "evaluate", config, run,
                 {"imputed.csv", "selection.csv", "fits.json", "metrics.csv", "agreement.csv"});
  return exit_code(run);
}

int run_densities(const PipelineConfig& config) {
  const ImputationRun run = impute_from_config(config);
  std::vector<double> truth;
  if (config.truth) load_truth(config, run.panel, truth);
  ensure_dir(config.output_dir);
  csv::Writer w(config.output_dir / "densities.csv");
  w.row({"cell_id", "source", "x", "density", "limit", "g_min", "g_max", "bandwidth"});
  for (const auto& rep : run.cells) {
    if (!rep.outcome.selection) continue;
    const double C = rep.limit;
    const DensityGrid win = window_grid(C, config.methods.window);
    std::vector<double> x;
    const double lo = config.density_lower * C, hi = config.density_upper * C;
    const auto steps = static_cast<long>(std::floor((hi - lo) / config.density_step + 1e-9));
    for (long k = 0; k <= steps; ++k) x.push_back(lo + static_cast<double>(k) * config.density_step);
    const double h = rep.outcome.bandwidth;
    const auto emit = [&](const std::string& source, const std::vector<double>& values) {
      const auto f = kde(values, x, h);
      for (std::size_t k = 0; k < x.size(); ++k)
        w.row({rep.key.id(), source, csv::format_double(x[k]), csv::format_double(std::max(0.0, f[k])),
               csv::format_double(C), csv::format_double(win.g_min), csv::format_double(win.g_max),
               csv::format_double(h)});
    };
    for (const auto& [m, out] : rep.outcome.methods) {
      if (!out.ok) continue;
      const Eigen::VectorXd c = rep.outcome.completed(rep.y, m);
      emit(method_name(m), std::vector<double>(c.data(), c.data() + c.size()));
    }
    if (!truth.empty()) {
      std::vector<double> t;
      for (auto i : rep.rows) t.push_back(truth[i]);
      emit("truth", t);
    }
  }
  return exit_code(run);
}

int run_profile(const PipelineConfig& config) {
  const ImputationRun run = impute_from_config(config);
  const fs::path dir = config.output_dir / "profiles";
  ensure_dir(dir);
  bool failed = run.unfittable_cells() > 0;
  for (const auto& rep : run.cells) {
    if (rep.design_columns.empty()) continue;
    const CellInput in = rebuild_cell_input(config, run, rep);
    const std::string id = rep.key.id();
    try {
      const QuantileProfile prof = coefficient_profile(in.spec, in.y, in.state, config.methods.grid, config.methods.cqr);
      write_profile_csv(dir / (id + ".csv"), prof, in.names);
      write_profile_csv(dir / (id + "_extrapolated.csv"), extrapolate_profile(prof, config.methods.extrapolation),
                        in.names);
    } catch (const EstimationError&) {
      failed = true;
    }
  }
  return failed ? 2 : 0;
}

}  // namespace topimpute
