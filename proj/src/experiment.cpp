#include "fedpc/experiment.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "fedpc/errors.hpp"
#include "fedpc/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fedpc {
namespace {

json default_run_block() {
  return json{
      {"algorithm", "fedpc"},
      {"rounds", 5},
      {"local_epochs", 5},
      {"batch_size", 128},
      {"mu", 1.0},
      {"weight_decay", 1e-5},
      {"eta0", 1e-4},
      {"decay", 0.5},
      {"seed", 1},
      {"personalization_steps", 5},
      {"personalization_eta", 1e-3},
      {"metric_ii_mode", "all_pairs"},
      {"init_mode", "pretrain"},
      {"ingest", ""},
      {"model", {{"layer_sizes", {16, 32, 32, 4}}, {"frozen_layers", 1}}},
      {"federation",
       {{"num_vehicles", 3},
        {"drivers_per_vehicle", 4},
        {"classes", 4},
        {"feature_dim", 16},
        {"samples_per_client_per_class", 50},
        {"cluster_separation", 6.0},
        {"driver_dispersion", 1.0},
        {"noise_sigma", 0.25}}},
  };
}

[[noreturn]] void field_error(const std::string& field, const std::string& want) {
  throw ConfigError("config field '" + field + "': expected " + want);
}

int get_int(const json& j, const std::string& field) {
  if (!j.at(field).is_number_integer()) field_error(field, "an integer");
  return j.at(field).get<int>();
}

double get_double(const json& j, const std::string& field) {
  if (!j.at(field).is_number()) field_error(field, "a number");
  return j.at(field).get<double>();
}

std::uint64_t get_seed(const json& j, const std::string& field) {
  if (!j.at(field).is_number_integer() && !j.at(field).is_number_unsigned())
    field_error(field, "an integer seed");
  return j.at(field).get<std::uint64_t>();
}

std::string get_string(const json& j, const std::string& field) {
  if (!j.at(field).is_string()) field_error(field, "a string");
  return j.at(field).get<std::string>();
}

void check_known_keys(const json& block, const std::set<std::string>& known,
                      const std::string& where) {
  for (const auto& [key, value] : block.items())
    if (!known.count(key))
      throw ConfigError("unknown config field '" + where + key + "'");
}

// Later blocks win; nested objects merge recursively.
void merge_into(json& base, const json& overlay) {
  for (const auto& [key, value] : overlay.items()) {
    if (value.is_object() && base.contains(key) && base[key].is_object())
      merge_into(base[key], value);
    else
      base[key] = value;
  }
}

}  // namespace

FederationConfig federation_from_json(const json& block, std::uint64_t default_seed) {
  check_known_keys(block,
                   {"num_vehicles", "drivers_per_vehicle", "classes", "feature_dim",
                    "samples_per_client_per_class", "cluster_separation",
                    "driver_dispersion", "noise_sigma", "seed"},
                   "federation.");
  FederationConfig f;
  f.num_vehicles = get_int(block, "num_vehicles");
  f.drivers_per_vehicle = get_int(block, "drivers_per_vehicle");
  f.classes = get_int(block, "classes");
  f.feature_dim = get_int(block, "feature_dim");
  f.samples_per_client_per_class = get_int(block, "samples_per_client_per_class");
  f.cluster_separation = get_double(block, "cluster_separation");
  f.driver_dispersion = get_double(block, "driver_dispersion");
  f.noise_sigma = get_double(block, "noise_sigma");
  f.seed = block.contains("seed") ? get_seed(block, "seed") : default_seed;
  return f;
}

RunConfig run_config_from_json(const json& block) {
  check_known_keys(block,
                   {"algorithm", "rounds", "local_epochs", "batch_size", "mu",
                    "weight_decay", "eta0", "decay", "seed",
                    "personalization_steps", "personalization_eta",
                    "metric_ii_mode", "init_mode", "ingest", "model", "federation",
                    "name"},
                   "");
  RunConfig cfg;
  cfg.algorithm = algorithm_from_string(get_string(block, "algorithm"));
  cfg.rounds = get_int(block, "rounds");
  cfg.local_epochs = get_int(block, "local_epochs");
  cfg.batch_size = get_int(block, "batch_size");
  cfg.loss.mu = get_double(block, "mu");
  cfg.loss.weight_decay = get_double(block, "weight_decay");
  cfg.lr.eta0 = get_double(block, "eta0");
  cfg.lr.decay = get_double(block, "decay");
  cfg.seed = get_seed(block, "seed");
  cfg.personalization_steps = get_int(block, "personalization_steps");
  cfg.personalization_eta = get_double(block, "personalization_eta");

  const std::string mode = get_string(block, "metric_ii_mode");
  if (mode == "all_pairs")
    cfg.metric_ii_mode = MetricIIMode::all_pairs;
  else if (mode == "random_single")
    cfg.metric_ii_mode = MetricIIMode::random_single;
  else
    field_error("metric_ii_mode", "'all_pairs' or 'random_single'");

  const std::string init = get_string(block, "init_mode");
  if (init == "pretrain")
    cfg.init_mode = InitMode::pretrain;
  else if (init == "random")
    cfg.init_mode = InitMode::random;
  else
    field_error("init_mode", "'pretrain' or 'random'");

  cfg.ingest_path = get_string(block, "ingest");

  const json& m = block.at("model");
  check_known_keys(m, {"layer_sizes", "frozen_layers"}, "model.");
  if (!m.at("layer_sizes").is_array()) field_error("model.layer_sizes", "an array");
  cfg.model.layer_sizes.clear();
  for (const auto& v : m.at("layer_sizes")) {
    if (!v.is_number_integer()) field_error("model.layer_sizes", "integers");
    cfg.model.layer_sizes.push_back(v.get<int>());
  }
  cfg.model.frozen_layers = get_int(m, "frozen_layers");

  cfg.federation = federation_from_json(block.at("federation"), cfg.seed);
  return cfg;
}

void apply_override(json& block, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + assignment + "': expected key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // unquoted strings like fedprox
  }

  json* at = &block;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("override '" + assignment + "': empty key");
    if (dot == std::string::npos) {
      (*at)[key] = value;
      return;
    }
    at = &(*at)[key];
    start = dot + 1;
  }
}

ExperimentFile load_experiment(const std::string& path,
                               const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }

  ExperimentFile ex;

  // A manifest replays its embedded resolved configs verbatim.
  const bool is_manifest = doc.is_object() && doc.contains("runs") &&
                           doc["runs"].is_array() && !doc["runs"].empty() &&
                           doc["runs"][0].is_object() &&
                           doc["runs"][0].contains("resolved_config");
  if (is_manifest) {
    for (const auto& entry : doc["runs"]) {
      NamedRun run;
      run.name = entry.at("name").get<std::string>();
      run.block = entry.at("resolved_config");
      for (const auto& o : overrides) apply_override(run.block, o);
      const RunConfig cfg = run_config_from_json(run.block);
      const std::string replay_hash = config_hash(resolved_json(run.name, cfg));
      if (overrides.empty() &&
          replay_hash != entry.at("config_hash").get<std::string>())
        throw ConfigError("manifest replay: config hash mismatch for run '" +
                          run.name + "'");
      ex.runs.push_back(std::move(run));
    }
    return ex;
  }

  check_known_keys(doc, {"output_dir", "seeds", "federation", "runs"}, "");
  if (doc.contains("output_dir")) ex.output_dir = get_string(doc, "output_dir");
  if (doc.contains("seeds")) {
    if (!doc["seeds"].is_array()) field_error("seeds", "an array of integers");
    for (const auto& s : doc["seeds"]) {
      if (!s.is_number_integer() && !s.is_number_unsigned())
        field_error("seeds", "integers");
      ex.seeds.push_back(s.get<std::uint64_t>());
    }
  }

  if (!doc.contains("runs") || !doc["runs"].is_array() || doc["runs"].empty())
    throw ConfigError("config: needs a nonempty 'runs' array");

  std::set<std::string> names;
  for (const auto& entry : doc["runs"]) {
    if (!entry.is_object()) throw ConfigError("config: run entries must be objects");
    json block = default_run_block();
    if (doc.contains("federation")) merge_into(block["federation"], doc["federation"]);
    merge_into(block, entry);
    for (const auto& o : overrides) apply_override(block, o);

    NamedRun run;
    run.name = block.contains("name") ? get_string(block, "name")
                                      : get_string(block, "algorithm");
    block.erase("name");
    run_config_from_json(block);  // reject unknown fields and bad types now
    run.block = std::move(block);
    if (!names.insert(run.name).second)
      throw ConfigError("config: duplicate run name '" + run.name + "'");
    ex.runs.push_back(std::move(run));
  }
  return ex;
}

json resolved_json(const std::string& name, const RunConfig& cfg) {
  json j;
  j["name"] = name;
  j["algorithm"] = to_string(cfg.algorithm);
  j["rounds"] = cfg.rounds;
  j["local_epochs"] = cfg.local_epochs;
  j["batch_size"] = cfg.batch_size;
  j["mu"] = cfg.loss.mu;
  j["weight_decay"] = cfg.loss.weight_decay;
  j["eta0"] = cfg.lr.eta0;
  j["decay"] = cfg.lr.decay;
  j["seed"] = cfg.seed;
  j["personalization_steps"] = cfg.personalization_steps;
  j["personalization_eta"] = cfg.personalization_eta;
  j["metric_ii_mode"] =
      cfg.metric_ii_mode == MetricIIMode::all_pairs ? "all_pairs" : "random_single";
  j["init_mode"] = cfg.init_mode == InitMode::pretrain ? "pretrain" : "random";
  j["ingest"] = cfg.ingest_path;
  j["model"] = {{"layer_sizes", cfg.model.layer_sizes},
                {"frozen_layers", cfg.model.frozen_layers}};
  j["federation"] = {{"num_vehicles", cfg.federation.num_vehicles},
                     {"drivers_per_vehicle", cfg.federation.drivers_per_vehicle},
                     {"classes", cfg.federation.classes},
                     {"feature_dim", cfg.federation.feature_dim},
                     {"samples_per_client_per_class",
                      cfg.federation.samples_per_client_per_class},
                     {"cluster_separation", cfg.federation.cluster_separation},
                     {"driver_dispersion", cfg.federation.driver_dispersion},
                     {"noise_sigma", cfg.federation.noise_sigma},
                     {"seed", cfg.federation.seed}};
  return j;
}

std::string config_hash(const json& resolved) {
  std::ostringstream hex;
  hex << "fnv1a:" << std::hex << std::setw(16) << std::setfill('0')
      << fnv1a(resolved.dump());
  return hex.str();
}

void validate_experiment(const ExperimentFile& experiment) {
  for (const auto& run : experiment.runs) {
    const std::vector<std::uint64_t> seeds =
        experiment.seeds.empty()
            ? std::vector<std::uint64_t>{run.block.at("seed").get<std::uint64_t>()}
            : experiment.seeds;
    for (std::uint64_t seed : seeds) {
      json block = run.block;
      block["seed"] = seed;
      try {
        run_config_from_json(block).validate();
      } catch (const Error& e) {
        throw ConfigError("run '" + run.name + "' (seed " + std::to_string(seed) +
                          "): " + e.what());
      }
    }
  }
}

namespace {

struct Task {
  std::string name;
  std::uint64_t seed;
  RunConfig cfg;
};

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
}

void execute_one(const Task& task, const fs::path& dir) {
  fs::create_directories(dir);
  const RunResult result = run(task.cfg);

  const std::string metrics = to_json(result.report).dump(2) + "\n";
  write_file(dir / "metrics.json", metrics);

  std::ostringstream mcsv;
  write_metrics_csv(mcsv, result.report);
  write_file(dir / "metrics.csv", mcsv.str());

  std::ostringstream lcsv;
  write_ledger_csv(lcsv, result.report.ledger);
  write_file(dir / "ledger.csv", lcsv.str());

  std::ostringstream scsv;
  write_schedule_csv(scsv, result.schedule);
  write_file(dir / "schedule.csv", scsv.str());

  // Manifest entries accumulate; a rerun appends rather than rewrites.
  const fs::path manifest_path = dir / "manifest.json";
  json manifest = json{{"runs", json::array()}};
  if (fs::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    try {
      manifest = json::parse(in);
    } catch (const json::exception&) {
      manifest = json{{"runs", json::array()}};
    }
    if (!manifest.is_object() || !manifest.contains("runs") ||
        !manifest["runs"].is_array())
      manifest = json{{"runs", json::array()}};
  }
  const json resolved = resolved_json(task.name, task.cfg);
  std::ostringstream mh;
  mh << "fnv1a:" << std::hex << std::setw(16) << std::setfill('0') << fnv1a(metrics);
  manifest["runs"].push_back({{"name", task.name},
                              {"seed", task.seed},
                              {"algorithm", to_string(task.cfg.algorithm)},
                              {"resolved_config", resolved},
                              {"config_hash", config_hash(resolved)},
                              {"metrics_hash", mh.str()}});
  write_file(manifest_path, manifest.dump(2) + "\n");
}

}  // namespace

std::vector<RunOutcome> execute_experiment(const ExperimentFile& experiment,
                                           int workers, std::ostream& log) {
  validate_experiment(experiment);

  std::vector<Task> tasks;
  for (const auto& run : experiment.runs) {
    const std::vector<std::uint64_t> seeds =
        experiment.seeds.empty()
            ? std::vector<std::uint64_t>{run.block.at("seed").get<std::uint64_t>()}
            : experiment.seeds;
    for (std::uint64_t seed : seeds) {
      json block = run.block;
      block["seed"] = seed;
      tasks.push_back({run.name, seed, run_config_from_json(block)});
    }
  }

  std::vector<RunOutcome> outcomes(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;

  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) break;
      const Task& task = tasks[i];
      const fs::path dir = fs::path(experiment.output_dir) /
                           (task.name + "-seed" + std::to_string(task.seed));
      RunOutcome& out = outcomes[i];
      out.name = task.name;
      out.seed = task.seed;
      out.directory = dir.string();
      try {
        execute_one(task, dir);
        out.ok = true;
        std::lock_guard<std::mutex> lock(log_mutex);
        log << "[ok] " << task.name << " seed=" << task.seed << " -> "
            << dir.string() << "\n";
      } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
        std::lock_guard<std::mutex> lock(log_mutex);
        log << "[fail] " << task.name << " seed=" << task.seed << ": " << e.what()
            << "\n";
      }
    }
  };

  const int n_threads =
      std::max(1, std::min<int>(workers, static_cast<int>(tasks.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return outcomes;
}

void compare_reports(const std::vector<std::string>& report_paths,
                     std::ostream& out, const std::string& csv_path) {
  if (report_paths.size() < 2)
    throw ConfigError("compare: need at least 2 reports");

  std::vector<MetricsReport> reports;
  std::vector<std::string> labels;
  for (const auto& path : report_paths) {
    std::ifstream in(path);
    if (!in) throw ConfigError("compare: missing report " + path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw SchemaError("report " + path + ": " + e.what());
    }
    try {
      reports.push_back(report_from_json(j));
    } catch (const SchemaError& e) {
      throw SchemaError("report " + path + ": " + e.what());
    }
    labels.push_back(fs::path(path).parent_path().filename().string().empty()
                         ? fs::path(path).stem().string()
                         : fs::path(path).parent_path().filename().string());
  }
  for (std::size_t i = 1; i < reports.size(); ++i) {
    if (reports[i].rounds.size() != reports[0].rounds.size())
      throw SchemaError("report " + report_paths[i] +
                        ": round count differs from " + report_paths[0]);
    if (reports[i].personalization.mean.size() !=
        reports[0].personalization.mean.size())
      throw SchemaError("report " + report_paths[i] +
                        ": personalization curve length differs from " +
                        report_paths[0]);
  }

  auto cell = [](const std::optional<double>& v) -> std::string {
    if (!v) return "-";
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << *v;
    return s.str();
  };

  std::size_t width = 14;
  for (const auto& label : labels) width = std::max(width, label.size() + 5);

  out << "per-round metrics (i) and (ii)\n";
  out << std::left << std::setw(7) << "round";
  for (const auto& label : labels)
    out << std::setw(width) << (label + ":i") << std::setw(width) << (label + ":ii");
  out << "\n";
  std::ostringstream csv;
  csv << "section,index";
  for (const auto& label : labels)
    csv << ',' << label << ":metric_i," << label << ":metric_ii," << label
        << ":metric_iii";
  csv << "\n";
  for (std::size_t r = 0; r < reports[0].rounds.size(); ++r) {
    out << std::setw(7) << r;
    csv << "round," << r;
    for (const auto& rep : reports) {
      out << std::setw(width) << cell(rep.rounds[r].metric_i.mean) << std::setw(width)
          << cell(rep.rounds[r].metric_ii.mean);
      csv << ',' << cell(rep.rounds[r].metric_i.mean) << ','
          << cell(rep.rounds[r].metric_ii.mean) << ',';
    }
    out << "\n";
    csv << "\n";
  }

  out << "\npersonalization curve (metric iii)\n";
  out << std::left << std::setw(7) << "step";
  for (const auto& label : labels) out << std::setw(width) << label;
  out << "\n";
  for (std::size_t k = 0; k < reports[0].personalization.mean.size(); ++k) {
    out << std::setw(7) << k;
    csv << "personalization," << k;
    for (const auto& rep : reports) {
      out << std::setw(width) << cell(rep.personalization.mean[k]);
      csv << ",,," << cell(rep.personalization.mean[k]);
    }
    out << "\n";
    csv << "\n";
  }

  if (!csv_path.empty()) write_file(csv_path, csv.str());
}

}  // namespace fedpc
