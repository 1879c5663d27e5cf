// Command line front end: synth, impute, evaluate, densities, profile.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "topimpute/pipeline.hpp"
#include "topimpute/synthgen.hpp"

namespace fs = std::filesystem;
using namespace topimpute;

namespace {

struct Overrides {
  std::string config;
  std::optional<int> jobs;
  std::optional<int> draws;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("-c,--config", o.config, "Configuration file (default: $TOPIMPUTE_CONFIG)");
  sub->add_option("-j,--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
  sub->add_option("-s,--seed", o.seed, "Master seed");
  sub->add_option("-o,--output", o.output, "Output directory");
}

std::string config_path(const Overrides& o) {
  if (!o.config.empty()) return o.config;
  if (const char* env = std::getenv("TOPIMPUTE_CONFIG"); env && *env) return env;
  throw ConfigError("no configuration file: pass --config or set TOPIMPUTE_CONFIG");
}

PipelineConfig pipeline_config(const Overrides& o) {
  const fs::path path = config_path(o);
  KeyValueConfig cfg = KeyValueConfig::load(path);
  if (o.jobs) cfg.set("jobs", std::to_string(*o.jobs));
  if (o.draws) cfg.set("draws", std::to_string(*o.draws));
  if (o.seed) cfg.set("seed", std::to_string(*o.seed));
  if (o.output) cfg.set("output_dir", fs::absolute(*o.output).string());
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  return PipelineConfig::from_config(cfg, base);
}

/// Writes panel.csv, truth.csv, rules.txt and a pipeline config that reads them.
int run_synth(const Overrides& o) {
  KeyValueConfig cfg;
  std::string path = o.config;
  if (path.empty())
    if (const char* env = std::getenv("TOPIMPUTE_CONFIG"); env && *env) path = env;
  if (!path.empty()) cfg = KeyValueConfig::load(path);
  if (o.seed) cfg.set("synth.seed", std::to_string(*o.seed));
  const SynthConfig sc = SynthConfig::from_config(cfg);
  const fs::path dir = o.output ? fs::path(*o.output) : fs::path("synth");
  fs::create_directories(dir);
  const SynthPanel sp = generate(sc);
  write_panel_csv(dir / "panel.csv", sp.panel);
  write_truth_csv(dir / "truth.csv", sp.panel, sp.truth);
  write_rules(dir / "rules.txt", sp.rules);
  std::ofstream out(dir / "config.txt");
  out << "# pipeline configuration for the generated panel\n"
      << "input = panel.csv\ntruth = truth.csv\nrules_file = rules.txt\noutput_dir = out\n"
      << "covariates = " << [] {
           std::string s;
           for (const auto& c : kSynthCovariates) s += (s.empty() ? "" : ",") + c;
           return s;
         }()
      << "\ncells = gender\nmethods = tobit_r,tobit_lr@0.2,cqr_at_limit\nseed = " << sc.seed << "\n";
  std::cout << "wrote " << sp.panel.records.size() << " spells to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Imputation of right-censored wages in panel data"};
  app.set_version_flag("--version", TOPIMPUTE_VERSION);
  app.require_subcommand(1);
  Overrides o;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic censored panel");
  add_common(synth, o);
  auto* impute = app.add_subcommand("impute", "Impute censored wages and select a method per cell");
  add_common(impute, o);
  impute->add_option("-k,--draws", o.draws, "Imputations per row (one is the documented default)")
      ->check(CLI::PositiveNumber);
  auto* evaluate = app.add_subcommand("evaluate", "Impute, then score every method against the truth file");
  add_common(evaluate, o);
  auto* densities = app.add_subcommand("densities", "Export kernel densities around the limit per cell");
  add_common(densities, o);
  auto* profile = app.add_subcommand("profile", "Export CQR coefficient profiles per cell");
  add_common(profile, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return run_synth(o);
    const PipelineConfig config = pipeline_config(o);
    int code = 0;
    if (impute->parsed()) code = run_impute(config);
    else if (evaluate->parsed()) code = run_evaluate(config);
    else if (densities->parsed()) code = run_densities(config);
    else if (profile->parsed()) code = run_profile(config);
    if (code == 2) std::cerr << "some cells could not be imputed; see selection.csv\n";
    return code;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
