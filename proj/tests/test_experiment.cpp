#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedpc/errors.hpp"
#include "fedpc/experiment.hpp"

using namespace fedpc;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fedpc_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small, fast run block shared by the tests below.
json tiny_experiment(const fs::path& out_dir) {
  return json{
      {"output_dir", out_dir.string()},
      {"seeds", {1}},
      {"federation", {{"samples_per_client_per_class", 10}}},
      {"runs",
       {{{"name", "t"},
         {"algorithm", "fedpc"},
         {"rounds", 2},
         {"local_epochs", 1},
         {"batch_size", 16},
         {"init_mode", "random"},
         {"model", {{"layer_sizes", {16, 8, 4}}, {"frozen_layers", 0}}}}}}};
}

fs::path write_config(const fs::path& dir, const json& doc) {
  const fs::path p = dir / "exp.json";
  std::ofstream out(p);
  out << doc.dump(2) << "\n";
  return p;
}

}  // namespace

TEST_CASE("config: defaults echo the reference training constants") {
  const fs::path dir = fresh_dir("defaults");
  const fs::path cfg_path =
      write_config(dir, json{{"runs", {{{"name", "defaults"}}}}});
  const ExperimentFile ex = load_experiment(cfg_path.string());
  REQUIRE(ex.runs.size() == 1);
  const RunConfig cfg = run_config_from_json(ex.runs[0].block);
  CHECK(cfg.rounds == 5);
  CHECK(cfg.local_epochs == 5);
  CHECK(cfg.batch_size == 128);
  CHECK(cfg.lr.eta0 == 1e-4);
  CHECK(cfg.lr.decay == 0.5);
  CHECK(cfg.loss.mu == 1.0);
  CHECK(cfg.loss.weight_decay == 1e-5);

  const json resolved = resolved_json("defaults", cfg);
  CHECK(resolved["rounds"] == 5);
  CHECK(resolved["local_epochs"] == 5);
  CHECK(resolved["batch_size"] == 128);
  CHECK(resolved["eta0"] == 1e-4);
  CHECK(resolved["decay"] == 0.5);
  CHECK(resolved["mu"] == 1.0);
  CHECK(resolved["weight_decay"] == 1e-5);
}

TEST_CASE("config: field-level diagnostics for bad and unknown fields") {
  const fs::path dir = fresh_dir("diag");

  json bad = tiny_experiment(dir / "o");
  bad["runs"][0]["rounds"] = "five";
  try {
    load_experiment(write_config(dir, bad).string());
    validate_experiment(load_experiment((dir / "exp.json").string()));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("rounds") != std::string::npos);
  }

  json unknown = tiny_experiment(dir / "o");
  unknown["runs"][0]["learning_rate"] = 0.1;
  CHECK_THROWS_AS(load_experiment(write_config(dir, unknown).string()), ConfigError);

  json dup = tiny_experiment(dir / "o");
  dup["runs"].push_back(dup["runs"][0]);
  CHECK_THROWS_AS(load_experiment(write_config(dir, dup).string()), ConfigError);

  json invalid = tiny_experiment(dir / "o");
  invalid["runs"][0]["mu"] = -1.0;
  const ExperimentFile ex = load_experiment(write_config(dir, invalid).string());
  try {
    validate_experiment(ex);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("'t'") != std::string::npos);  // run name
  }
}

TEST_CASE("run: identical config and seed produce byte-identical metrics.json") {
  const fs::path dir = fresh_dir("determinism");
  const fs::path cfg_path = write_config(dir, tiny_experiment(dir / "a"));
  ExperimentFile ex = load_experiment(cfg_path.string());
  std::ostringstream log;
  auto outcomes = execute_experiment(ex, 1, log);
  REQUIRE(outcomes.size() == 1);
  REQUIRE(outcomes[0].ok);

  ex.output_dir = (dir / "b").string();
  outcomes = execute_experiment(ex, 1, log);
  REQUIRE(outcomes[0].ok);

  CHECK(read_file(dir / "a" / "t-seed1" / "metrics.json") ==
        read_file(dir / "b" / "t-seed1" / "metrics.json"));
  CHECK(read_file(dir / "a" / "t-seed1" / "metrics.csv") ==
        read_file(dir / "b" / "t-seed1" / "metrics.csv"));
  CHECK(read_file(dir / "a" / "t-seed1" / "schedule.csv") ==
        read_file(dir / "b" / "t-seed1" / "schedule.csv"));
}

TEST_CASE("run: the input config file is never mutated") {
  const fs::path dir = fresh_dir("immutable");
  const fs::path cfg_path = write_config(dir, tiny_experiment(dir / "out"));
  const std::string before = read_file(cfg_path);
  ExperimentFile ex = load_experiment(cfg_path.string());
  std::ostringstream log;
  REQUIRE(execute_experiment(ex, 1, log)[0].ok);
  CHECK(read_file(cfg_path) == before);
}

TEST_CASE("run: fedprox with mu=0 and fedavg emit identical metric tables") {
  const fs::path dir = fresh_dir("equiv");
  json doc = tiny_experiment(dir / "out");
  doc["runs"][0]["algorithm"] = "fedavg";
  doc["runs"][0]["name"] = "avg";
  json prox = doc["runs"][0];
  prox["algorithm"] = "fedprox";
  prox["mu"] = 0.0;
  prox["name"] = "prox";
  doc["runs"].push_back(prox);

  ExperimentFile ex = load_experiment(write_config(dir, doc).string());
  std::ostringstream log;
  const auto outcomes = execute_experiment(ex, 2, log);
  for (const auto& o : outcomes) REQUIRE(o.ok);

  CHECK(read_file(dir / "out" / "avg-seed1" / "metrics.csv") ==
        read_file(dir / "out" / "prox-seed1" / "metrics.csv"));
  const json a = json::parse(read_file(dir / "out" / "avg-seed1" / "metrics.json"));
  const json p = json::parse(read_file(dir / "out" / "prox-seed1" / "metrics.json"));
  CHECK(a["rounds"] == p["rounds"]);
  CHECK(a["personalization"] == p["personalization"]);
  CHECK(a["ledger"] == p["ledger"]);
}

TEST_CASE("run: ingested feature tables drive a full run") {
  const fs::path dir = fresh_dir("ingest_run");
  FederationConfig gen;
  gen.samples_per_client_per_class = 10;
  gen.seed = 6;
  const Federation fed = generate_federation(gen);
  const fs::path csv = dir / "fed.csv";
  export_feature_table(csv.string(), fed.clients);

  json doc = tiny_experiment(dir / "out");
  doc["runs"][0]["ingest"] = csv.string();
  doc["runs"][0]["algorithm"] = "ring";
  ExperimentFile ex = load_experiment(write_config(dir, doc).string());
  std::ostringstream log;
  const auto outcomes = execute_experiment(ex, 1, log);
  REQUIRE(outcomes.size() == 1);
  REQUIRE(outcomes[0].ok);
  const json report =
      json::parse(read_file(dir / "out" / "t-seed1" / "metrics.json"));
  CHECK(report["rounds"].size() == 2);
  // 12 ingested clients -> 2 test, 10 training; ring visits everyone.
  CHECK(report["rounds"][0]["metric_i_per_client"].size() == 10);
  CHECK(report["rounds"][0]["unvisited_count"] == 0);

  // Class count mismatches surface before training.
  json bad = doc;
  bad["runs"][0]["model"] = {{"layer_sizes", {16, 8, 3}}, {"frozen_layers", 0}};
  bad["runs"][0]["name"] = "bad";
  ExperimentFile bex = load_experiment(write_config(dir, bad).string());
  const auto bad_outcomes = execute_experiment(bex, 1, log);
  REQUIRE(bad_outcomes.size() == 1);
  CHECK(!bad_outcomes[0].ok);
  CHECK(bad_outcomes[0].error.find("class count") != std::string::npos);
}

TEST_CASE("run: a failing run does not stop the rest of the sweep") {
  const fs::path dir = fresh_dir("partial");
  json doc = tiny_experiment(dir / "out");
  json broken = doc["runs"][0];
  broken["name"] = "broken";
  broken["ingest"] = (dir / "missing.csv").string();
  doc["runs"].push_back(broken);

  ExperimentFile ex = load_experiment(write_config(dir, doc).string());
  std::ostringstream log;
  const auto outcomes = execute_experiment(ex, 1, log);
  REQUIRE(outcomes.size() == 2);
  CHECK(outcomes[0].ok);
  CHECK(!outcomes[1].ok);
  CHECK(outcomes[1].error.find("missing.csv") != std::string::npos);
  CHECK(fs::exists(dir / "out" / "t-seed1" / "metrics.json"));
}

TEST_CASE("run: manifest replay reproduces the run and verifies its hash") {
  const fs::path dir = fresh_dir("replay");
  ExperimentFile ex =
      load_experiment(write_config(dir, tiny_experiment(dir / "first")).string());
  std::ostringstream log;
  REQUIRE(execute_experiment(ex, 1, log)[0].ok);
  const fs::path manifest = dir / "first" / "t-seed1" / "manifest.json";
  REQUIRE(fs::exists(manifest));

  ExperimentFile replay = load_experiment(manifest.string());
  replay.output_dir = (dir / "second").string();
  REQUIRE(execute_experiment(replay, 1, log)[0].ok);
  CHECK(read_file(dir / "first" / "t-seed1" / "metrics.json") ==
        read_file(dir / "second" / "t-seed1" / "metrics.json"));

  // Tampering with the stored config must be caught.
  json doc = json::parse(read_file(manifest));
  doc["runs"][0]["resolved_config"]["rounds"] = 3;
  const fs::path tampered = dir / "tampered.json";
  std::ofstream(tampered) << doc.dump(2);
  CHECK_THROWS_AS(load_experiment(tampered.string()), ConfigError);
}

TEST_CASE("run: overrides reach into nested blocks") {
  const fs::path dir = fresh_dir("override");
  const fs::path cfg_path = write_config(dir, tiny_experiment(dir / "out"));
  const ExperimentFile ex = load_experiment(
      cfg_path.string(), {"mu=0.25", "federation.noise_sigma=0.5", "algorithm=ring"});
  const RunConfig cfg = run_config_from_json(ex.runs[0].block);
  CHECK(cfg.loss.mu == 0.25);
  CHECK(cfg.federation.noise_sigma == 0.5);
  CHECK(cfg.algorithm == Algorithm::ring);
  CHECK_THROWS_AS(apply_override(const_cast<json&>(ex.runs[0].block), "novalue"),
                  ConfigError);
}

TEST_CASE("compare: identical reports produce identical columns") {
  const fs::path dir = fresh_dir("compare");
  ExperimentFile ex =
      load_experiment(write_config(dir, tiny_experiment(dir / "out")).string());
  std::ostringstream log;
  REQUIRE(execute_experiment(ex, 1, log)[0].ok);
  const std::string report = (dir / "out" / "t-seed1" / "metrics.json").string();
  const fs::path copy = dir / "copy.json";
  fs::copy_file(report, copy);

  std::ostringstream table;
  compare_reports({report, copy.string()}, table, (dir / "cmp.csv").string());
  const std::string csv = read_file(dir / "cmp.csv");

  // Each data row must repeat its value for both reports.
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);  // header
  int checked = 0;
  while (std::getline(lines, line)) {
    if (line.rfind("round,", 0) == 0) {
      std::vector<std::string> cells;
      std::string cell;
      std::istringstream ls(line);
      while (std::getline(ls, cell, ',')) cells.push_back(cell);
      REQUIRE(cells.size() >= 7);  // trailing empty metric_iii cell is dropped
      CHECK(cells[2] == cells[5]);
      CHECK(cells[3] == cells[6]);
      ++checked;
    }
  }
  CHECK(checked == 2);
}

TEST_CASE("compare: helpful errors for missing files and schema mismatches") {
  const fs::path dir = fresh_dir("compare_err");
  ExperimentFile ex =
      load_experiment(write_config(dir, tiny_experiment(dir / "out")).string());
  std::ostringstream log;
  REQUIRE(execute_experiment(ex, 1, log)[0].ok);
  const std::string good = (dir / "out" / "t-seed1" / "metrics.json").string();

  std::ostringstream sink;
  try {
    compare_reports({good, (dir / "absent.json").string()}, sink, "");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("absent.json") != std::string::npos);
  }

  // A report with a different round count is incompatible.
  json other = json::parse(read_file(good));
  other["rounds"].erase(1);
  const fs::path short_report = dir / "short.json";
  std::ofstream(short_report) << other.dump(2);
  try {
    compare_reports({good, short_report.string()}, sink, "");
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("short.json") != std::string::npos);
  }

  CHECK_THROWS_AS(compare_reports({good}, sink, ""), ConfigError);
}
