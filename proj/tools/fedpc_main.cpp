// Experiment runner for the peer-to-peer federated continual learning
// simulator. See README.md for the config grammar and output layout.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedpc/experiment.hpp"

namespace {

int do_run(const std::string& config_path, const std::vector<std::string>& sets,
           const std::vector<std::uint64_t>& seeds, const std::string& out_dir,
           int workers) {
  fedpc::ExperimentFile ex = fedpc::load_experiment(config_path, sets);
  if (!seeds.empty()) ex.seeds = seeds;
  if (!out_dir.empty()) ex.output_dir = out_dir;

  const auto outcomes = fedpc::execute_experiment(ex, workers, std::cout);
  int failures = 0;
  for (const auto& o : outcomes)
    if (!o.ok) ++failures;
  if (failures > 0) {
    std::cerr << failures << " of " << outcomes.size() << " runs failed:\n";
    for (const auto& o : outcomes)
      if (!o.ok)
        std::cerr << "  " << o.name << " seed=" << o.seed << ": " << o.error << "\n";
    return 1;
  }
  return 0;
}

int do_validate(const std::string& config_path, const std::vector<std::string>& sets) {
  fedpc::ExperimentFile ex = fedpc::load_experiment(config_path, sets);
  fedpc::validate_experiment(ex);
  std::cout << "ok: " << ex.runs.size() << " run(s) valid\n";
  return 0;
}

int do_compare(const std::vector<std::string>& reports, const std::string& csv) {
  fedpc::compare_reports(reports, std::cout, csv);
  return 0;
}

int do_gen_data(const std::string& config_path, const std::vector<std::string>& sets,
                std::uint64_t seed, bool seed_given, const std::string& out_csv) {
  nlohmann::json block = nlohmann::json::object();
  if (!config_path.empty()) {
    const fedpc::ExperimentFile ex = fedpc::load_experiment(config_path);
    block = ex.runs.front().block;
  } else {
    block["federation"] = nlohmann::json::object();
    block["seed"] = 1;
  }
  for (const auto& s : sets) fedpc::apply_override(block, s);
  if (seed_given) block["seed"] = seed;

  nlohmann::json fed_block = nlohmann::json{{"num_vehicles", 3},
                                            {"drivers_per_vehicle", 4},
                                            {"classes", 4},
                                            {"feature_dim", 16},
                                            {"samples_per_client_per_class", 50},
                                            {"cluster_separation", 6.0},
                                            {"driver_dispersion", 1.0},
                                            {"noise_sigma", 0.25}};
  for (const auto& [k, v] : block["federation"].items()) fed_block[k] = v;
  const auto cfg = fedpc::federation_from_json(
      fed_block, block.at("seed").get<std::uint64_t>());
  const fedpc::Federation fed = fedpc::generate_federation(cfg);
  fedpc::export_feature_table(out_csv, fed.clients);
  std::cout << "wrote " << fed.clients.size() << " clients to " << out_csv << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedpc: peer-to-peer federated continual learning simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir, csv_path, out_csv;
  std::vector<std::string> sets;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> reports;
  std::uint64_t seed = 1;
  int workers = 1;

  auto* run_cmd = app.add_subcommand("run", "execute runs from a config or manifest");
  run_cmd->add_option("config", config_path, "experiment file or manifest.json")
      ->required();
  run_cmd->add_option("--seed", seeds, "seed(s), overrides the file's seed list");
  run_cmd->add_option("--out", out_dir, "output directory override");
  run_cmd->add_option("--workers", workers, "parallel (run, seed) executions")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--set", sets, "field override, e.g. --set mu=0");
  std::string algorithm, mu, rounds;
  run_cmd->add_option("--algorithm", algorithm, "override algorithm for all runs");
  run_cmd->add_option("--mu", mu, "override proximal mu");
  run_cmd->add_option("--rounds", rounds, "override iteration rounds");

  auto* validate_cmd = app.add_subcommand("validate", "check a config without running");
  validate_cmd->add_option("config", config_path, "experiment file")->required();
  validate_cmd->add_option("--set", sets, "field override");

  auto* compare_cmd = app.add_subcommand("compare", "align metrics from >= 2 reports");
  compare_cmd->add_option("reports", reports, "metrics.json paths")
      ->expected(-2);
  compare_cmd->add_option("--out", csv_path, "also write the combined CSV here");

  auto* gen_cmd = app.add_subcommand("gen-data", "export a synthetic federation CSV");
  gen_cmd->add_option("config", config_path, "optional experiment file");
  auto* seed_opt = gen_cmd->add_option("--seed", seed, "federation seed");
  gen_cmd->add_option("--out", out_csv, "output CSV path")->required();
  gen_cmd->add_option("--set", sets, "field override, e.g. --set federation.classes=6");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      if (!algorithm.empty()) sets.push_back("algorithm=" + algorithm);
      if (!mu.empty()) sets.push_back("mu=" + mu);
      if (!rounds.empty()) sets.push_back("rounds=" + rounds);
      return do_run(config_path, sets, seeds, out_dir, workers);
    }
    if (validate_cmd->parsed()) return do_validate(config_path, sets);
    if (compare_cmd->parsed()) return do_compare(reports, csv_path);
    if (gen_cmd->parsed())
      return do_gen_data(config_path, sets, seed, seed_opt->count() > 0, out_csv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
