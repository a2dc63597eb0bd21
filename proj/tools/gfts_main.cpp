#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gfts/error.hpp"
#include "gfts/io.hpp"
#include "gfts/pipeline.hpp"
#include "gfts/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

int run_stage_command(gfts::Stage stage, const std::string& config_path, std::optional<std::uint64_t> seed,
                      std::optional<int> threads, const std::string& output) {
  gfts::RunConfig config;
  try {
    config = gfts::read_run_config(config_path);
    if (seed) config.seed = *seed;
    if (threads) config.threads = *threads;
    if (!output.empty()) config.output = output;
    config.validate();
  } catch (const gfts::Error& e) {
    std::cerr << "gfts: config: " << e.kind() << ": " << e.what() << "\n";
    return gfts::kExitConfig;
  }
  const gfts::PipelineResult r = gfts::run_pipeline(config, stage);
  if (r.exit_code != gfts::kExitOk) {
    std::cerr << "gfts: " << r.failed_stage << ": " << r.message << "\n";
    std::cerr << "gfts: partial outputs in " << (config.output / "quarantine").string() << "\n";
    return r.exit_code;
  }
  for (const auto& p : r.written) std::cout << p.string() << "\n";
  return gfts::kExitOk;
}

int simulate_command(const std::string& kind, const fs::path& out, std::uint64_t seed, int years, int first_year,
                     int first_age, int open_age) {
  gfts::SyntheticOptions o;
  o.seed = seed;
  o.years = years;
  o.first_year = first_year;
  o.first_age = first_age;
  o.open_age = open_age;
  const gfts::SyntheticData d = kind == "toy" ? gfts::simulate_toy(o) : gfts::simulate_japan(o);
  gfts::write_hmd_directory(out / "data", d);
  gfts::write_text(out / "structure.json", gfts::group_structure_to_json(d.structure));

  nlohmann::ordered_json cfg;
  cfg["structure"] = "structure.json";
  cfg["data"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < d.structure.bottom_count(); i += 2) {
    const std::string& id = d.structure.bottom_series()[i];
    const std::string area = id.substr(0, id.size() - 2);
    cfg["data"].push_back({{"area", area},
                           {"deaths", "data/" + area + "/Deaths_1x1.txt"},
                           {"exposures", "data/" + area + "/Exposures_1x1.txt"}});
  }
  cfg["output"] = "out";
  gfts::write_text(out / "config.json", cfg.dump(2) + "\n");
  std::cout << (out / "config.json").string() << "\n";
  return gfts::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grouped functional time series mortality forecasting"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string output;
  struct StageCommand {
    const char* name;
    const char* help;
    gfts::Stage stage;
  };
  const StageCommand stages[] = {
      {"smooth", "Smooth every series and write smoothed.csv", gfts::Stage::Smooth},
      {"fit", "Fit the mortality model to every series", gfts::Stage::Fit},
      {"forecast", "Base forecasts and bootstrap intervals", gfts::Stage::Forecast},
      {"reconcile", "Base, bottom-up and OLS forecasts with intervals", gfts::Stage::Reconcile},
      {"evaluate", "Expanding-window accuracy evaluation", gfts::Stage::Evaluate},
      {"price", "Fixed-term annuity quotes", gfts::Stage::Price},
  };
  std::vector<std::pair<CLI::App*, gfts::Stage>> stage_apps;
  for (const auto& s : stages) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--seed", seed, "Master seed (overrides the config)");
    sub->add_option("--threads", threads, "Worker threads (overrides the config)");
    sub->add_option("--output", output, "Output directory (overrides the config)");
    stage_apps.emplace_back(sub, s.stage);
  }

  std::string structure_out;
  CLI::App* structure = app.add_subcommand("structure", "Write the built-in Japanese group structure as JSON");
  structure->add_option("--out", structure_out, "Output file (stdout when omitted)");

  std::string sim_kind = "japan";
  std::string sim_out;
  std::uint64_t sim_seed = 1;
  int sim_years = 40;
  int sim_first_year = 1975;
  int sim_first_age = 0;
  int sim_open_age = 110;
  CLI::App* simulate = app.add_subcommand("simulate", "Write a seeded synthetic dataset in HMD format");
  simulate->add_option("--kind", sim_kind, "japan or toy")->check(CLI::IsMember({"japan", "toy"}));
  simulate->add_option("--out", sim_out, "Output directory")->required();
  simulate->add_option("--seed", sim_seed, "Seed");
  simulate->add_option("--years", sim_years, "Number of years");
  simulate->add_option("--first-year", sim_first_year, "First calendar year");
  simulate->add_option("--first-age", sim_first_age, "First age");
  simulate->add_option("--open-age", sim_open_age, "Open age group");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : gfts::kExitUsage;
  }

  try {
    for (const auto& [sub, stage] : stage_apps) {
      if (sub->parsed()) return run_stage_command(stage, config_path, seed, threads, output);
    }
    if (structure->parsed()) {
      const std::string text = gfts::group_structure_to_json(gfts::japan_structure());
      if (structure_out.empty()) {
        std::cout << text;
      } else {
        gfts::write_text(structure_out, text);
      }
      return gfts::kExitOk;
    }
    if (simulate->parsed()) {
      return simulate_command(sim_kind, sim_out, sim_seed, sim_years, sim_first_year, sim_first_age, sim_open_age);
    }
  } catch (const gfts::Error& e) {
    std::cerr << "gfts: " << e.kind() << ": " << e.what() << "\n";
    return gfts::kExitWrite;
  }
  return gfts::kExitUsage;
}
