#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedpc/algorithms.hpp"

namespace fedpc {

// A named run as written in the experiment file: the merged JSON block is
// kept so seed sweeps and overrides resolve lazily.
struct NamedRun {
  std::string name;
  nlohmann::json block;
};

// Parsed experiment file: named runs sharing a federation block, executed
// once per seed in `seeds`.
struct ExperimentFile {
  std::string output_dir = "out";
  std::vector<std::uint64_t> seeds;
  std::vector<NamedRun> runs;
};

// Builds a RunConfig from a merged JSON run block (defaults <- shared
// federation <- run block <- overrides). Unknown keys and bad field types
// raise ConfigError naming the field.
RunConfig run_config_from_json(const nlohmann::json& block);

// Parses a federation block; the federation seed defaults to default_seed
// when the block does not pin one.
FederationConfig federation_from_json(const nlohmann::json& block,
                                      std::uint64_t default_seed);

// Loads an experiment file, or a manifest written by a previous run
// (replay: each manifest entry becomes a run with its resolved config).
ExperimentFile load_experiment(const std::string& path,
                               const std::vector<std::string>& overrides = {});

// Applies one `dotted.path=value` override to a JSON block.
void apply_override(nlohmann::json& block, const std::string& assignment);

// Canonical resolved form of a run; hashing this pins the whole experiment.
nlohmann::json resolved_json(const std::string& name, const RunConfig& cfg);
std::string config_hash(const nlohmann::json& resolved);

struct RunOutcome {
  std::string name;
  std::uint64_t seed = 0;
  std::string directory;
  bool ok = false;
  std::string error;
};

// Executes every (run, seed) pair, writing metrics.json, metrics.csv,
// ledger.csv, schedule.csv and appending to manifest.json per run
// directory. Later runs continue after a failure. `workers` > 1 runs
// pairs concurrently; outputs are identical either way.
std::vector<RunOutcome> execute_experiment(const ExperimentFile& experiment,
                                           int workers, std::ostream& log);

// Validates all (run, seed) pairs without training; throws on the first
// invalid one with a field-level diagnostic.
void validate_experiment(const ExperimentFile& experiment);

// Aligned per-round and personalization tables for >= 2 reports; also
// written as CSV when csv_path is nonempty.
void compare_reports(const std::vector<std::string>& report_paths,
                     std::ostream& out, const std::string& csv_path);

}  // namespace fedpc
