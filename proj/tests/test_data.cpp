#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fedpc/algorithms.hpp"
#include "fedpc/data.hpp"
#include "fedpc/errors.hpp"
#include "fedpc/evaluation.hpp"

using namespace fedpc;

namespace {

FederationConfig small_config() {
  FederationConfig cfg;
  cfg.num_vehicles = 2;
  cfg.drivers_per_vehicle = 3;
  cfg.classes = 4;
  cfg.feature_dim = 16;
  cfg.samples_per_client_per_class = 10;
  cfg.cluster_separation = 6.0;
  cfg.driver_dispersion = 1.0;
  cfg.noise_sigma = 0.25;
  cfg.seed = 77;
  return cfg;
}

// Clients with five single-class samples each, enough to exercise splits.
std::vector<ClientDataset> dummy_clients(int n) {
  std::vector<ClientDataset> clients(n);
  for (int i = 0; i < n; ++i) {
    clients[i].client_id = i;
    clients[i].train_features = Matrix::Constant(2, 5, double(i));
    clients[i].train_labels = IntVector::Zero(5);
    clients[i].train_labels.tail(2).setConstant(1);
  }
  return clients;
}

Vector client_centroid(const ClientDataset& c) {
  const Eigen::Index n = c.train_count() + c.test_count();
  return (c.train_features.rowwise().sum() + c.test_features.rowwise().sum()) /
         static_cast<double>(n);
}

}  // namespace

TEST_CASE("generate: one client per (vehicle, driver) pair") {
  const Federation fed = generate_federation(small_config());
  REQUIRE(fed.clients.size() == 6);
  int by_vehicle[2] = {0, 0};
  for (const auto& c : fed.clients) {
    CHECK((c.vehicle_id == 0 || c.vehicle_id == 1));
    ++by_vehicle[c.vehicle_id];
  }
  CHECK(by_vehicle[0] == 3);
  CHECK(by_vehicle[1] == 3);
}

TEST_CASE("generate: identical config gives bit-identical federations") {
  const Federation a = generate_federation(small_config());
  const Federation b = generate_federation(small_config());
  REQUIRE(a.clients.size() == b.clients.size());
  CHECK(a.split.training_clients == b.split.training_clients);
  CHECK(a.split.test_clients == b.split.test_clients);
  for (std::size_t i = 0; i < a.clients.size(); ++i) {
    CHECK(a.clients[i].train_features == b.clients[i].train_features);
    CHECK(a.clients[i].test_features == b.clients[i].test_features);
    CHECK(a.clients[i].train_labels == b.clients[i].train_labels);
    CHECK(a.clients[i].test_labels == b.clients[i].test_labels);
  }
}

TEST_CASE("generate: vehicle clusters dominate driver dispersion") {
  FederationConfig cfg = small_config();
  cfg.cluster_separation = 10.0;
  cfg.driver_dispersion = 1.0;
  cfg.noise_sigma = 0.5;
  const Federation fed = generate_federation(cfg);

  std::map<int, std::vector<Vector>> by_vehicle;
  for (const auto& c : fed.clients) by_vehicle[c.vehicle_id].push_back(client_centroid(c));

  double within = 0.0;
  int n_within = 0;
  for (const auto& [v, cents] : by_vehicle)
    for (std::size_t i = 0; i < cents.size(); ++i)
      for (std::size_t j = i + 1; j < cents.size(); ++j) {
        within += (cents[i] - cents[j]).norm();
        ++n_within;
      }
  within /= n_within;

  Vector g0 = Vector::Zero(cfg.feature_dim), g1 = g0;
  for (const auto& c : by_vehicle[0]) g0 += c / 3.0;
  for (const auto& c : by_vehicle[1]) g1 += c / 3.0;
  const double between = (g0 - g1).norm();

  CHECK(between >= 5.0 * within);
}

TEST_CASE("generate: labels balanced and classes present in train") {
  const Federation fed = generate_federation(small_config());
  for (const auto& c : fed.clients) {
    std::map<int, int> counts, train_counts;
    for (Eigen::Index i = 0; i < c.train_count(); ++i) {
      ++counts[c.train_labels[i]];
      ++train_counts[c.train_labels[i]];
    }
    for (Eigen::Index i = 0; i < c.test_count(); ++i) ++counts[c.test_labels[i]];
    int lo = 1 << 30, hi = 0;
    for (auto& [label, n] : counts) {
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
    CHECK(hi - lo <= 1);
    CHECK(static_cast<int>(train_counts.size()) == 4);  // every class trains
  }
}

TEST_CASE("generate: split ratios and soundness") {
  const Federation fed = generate_federation(small_config());
  CHECK(fed.split.training_clients.size() == 5);
  CHECK(fed.split.test_clients.size() == 1);
  std::set<int> seen;
  for (int c : fed.split.training_clients) seen.insert(c);
  for (int c : fed.split.test_clients) CHECK(seen.insert(c).second);
  CHECK(seen.size() == fed.clients.size());

  for (const auto& c : fed.clients) {
    const int total = static_cast<int>(c.train_count() + c.test_count());
    CHECK(total == 40);
    CHECK(c.test_count() == std::max<Eigen::Index>(1, total / 5));
  }
}

TEST_CASE("generate: invalid configs are rejected") {
  FederationConfig cfg = small_config();
  cfg.num_vehicles = 1;
  cfg.drivers_per_vehicle = 1;
  CHECK_THROWS_AS(generate_federation(cfg), ConfigError);

  cfg = small_config();
  cfg.driver_dispersion = cfg.cluster_separation;
  CHECK_THROWS_AS(generate_federation(cfg), ConfigError);

  cfg = small_config();
  cfg.feature_dim = 5;  // < vehicles + classes
  CHECK_THROWS_AS(generate_federation(cfg), ConfigError);

  cfg = small_config();
  cfg.noise_sigma = 0.0;
  CHECK_THROWS_AS(generate_federation(cfg), ConfigError);
}

TEST_CASE("double split: client-level counts at representative sizes") {
  auto clients26 = dummy_clients(26);
  const FederationSplit s26 = double_split(clients26, 5);
  CHECK(s26.training_clients.size() == 21);
  CHECK(s26.test_clients.size() == 5);

  auto clients35 = dummy_clients(35);
  const FederationSplit s35 = double_split(clients35, 5);
  CHECK(s35.training_clients.size() == 28);
  CHECK(s35.test_clients.size() == 7);

  auto clients2 = dummy_clients(2);
  const FederationSplit s2 = double_split(clients2, 5);
  CHECK(s2.training_clients.size() == 1);
  CHECK(s2.test_clients.size() == 1);

  auto clients1 = dummy_clients(1);
  CHECK_THROWS_AS(double_split(clients1, 5), ConfigError);
}

TEST_CASE("double split: per-client samples split 4/1 on five samples") {
  auto clients = dummy_clients(3);
  double_split(clients, 9);
  for (const auto& c : clients) {
    CHECK(c.train_count() == 4);
    CHECK(c.test_count() == 1);
    // both classes still in train
    std::set<int> train_classes(c.train_labels.data(),
                                c.train_labels.data() + c.train_count());
    CHECK(train_classes.size() == 2);
  }
}

TEST_CASE("ingest: 2 clients x 4 rows split 3/1") {
  const char* path = "ingest_ok.csv";
  {
    std::ofstream out(path);
    out << "client_id,label,f0,f1\n";
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 4; ++i)
        out << c << ',' << i % 2 << ',' << 0.5 * i << ',' << -1.0 * c << "\n";
  }
  const auto clients = ingest_feature_table(path);
  REQUIRE(clients.size() == 2);
  for (const auto& c : clients) {
    CHECK(c.vehicle_id == 0);
    CHECK(c.train_count() == 3);
    CHECK(c.test_count() == 1);
  }
}

TEST_CASE("ingest: error contracts name the offending line") {
  {
    std::ofstream out("ingest_bad.csv");
    out << "client_id,label,f0\n";
    for (int i = 0; i < 5; ++i) out << "0,0,1.0\n";
    out << "0,1,oops\n";  // line 7
  }
  try {
    ingest_feature_table("ingest_bad.csv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 7") != std::string::npos);
  }

  {
    std::ofstream out("ingest_empty.csv");
  }
  CHECK_THROWS_AS(ingest_feature_table("ingest_empty.csv"), ParseError);

  {
    std::ofstream out("ingest_ragged.csv");
    out << "client_id,label,f0,f1\n0,0,1.0\n";
  }
  try {
    ingest_feature_table("ingest_ragged.csv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  {
    std::ofstream out("ingest_header.csv");
    out << "client,label,f0\n0,0,1.0\n";
  }
  CHECK_THROWS_AS(ingest_feature_table("ingest_header.csv"), ParseError);

  {
    std::ofstream out("ingest_cols.csv");
    out << "client_id,label,f0,feat1\n0,0,1.0,2.0\n";
  }
  CHECK_THROWS_AS(ingest_feature_table("ingest_cols.csv"), ParseError);
}

TEST_CASE("ingest: export round-trips every sample exactly") {
  FederationConfig cfg = small_config();
  cfg.samples_per_client_per_class = 5;
  const Federation fed = generate_federation(cfg);
  export_feature_table("roundtrip.csv", fed.clients);
  const auto back = ingest_feature_table("roundtrip.csv");
  REQUIRE(back.size() == fed.clients.size());

  auto sample_set = [](const ClientDataset& c) {
    std::multiset<std::string> set;
    auto add = [&](const Matrix& f, const IntVector& l) {
      for (Eigen::Index i = 0; i < l.size(); ++i) {
        std::ostringstream key;
        key << l[i];
        for (Eigen::Index j = 0; j < f.rows(); ++j) key << '|' << f(j, i);
        set.insert(key.str());
      }
    };
    add(c.train_features, c.train_labels);
    add(c.test_features, c.test_labels);
    return set;
  };
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].client_id == fed.clients[i].client_id);
    CHECK(sample_set(back[i]) == sample_set(fed.clients[i]));
  }
}

TEST_CASE("heterogeneity ordering: linear transfer favors same-vehicle clients") {
  // A linear classifier trained on one client should transfer better to
  // same-vehicle clients than to other-vehicle clients, averaged over seeds.
  double same_total = 0.0, cross_total = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    FederationConfig cfg = small_config();
    cfg.seed = seed;
    cfg.samples_per_client_per_class = 40;
    cfg.cluster_separation = 8.0;
    const Federation fed = generate_federation(cfg);

    const ModelSpec linear{{cfg.feature_dim, cfg.classes}, 0};
    const ClientDataset& source = fed.client(0);
    const ParamVector w0 = glorot_init(linear, seed);
    const ParamVector model =
        train_local(w0, w0, source.train_features, source.train_labels, 30, 16,
                    1e-2, LossConfig{0.0, 0.0}, seed * 31)
            .model;

    for (const auto& c : fed.clients) {
      if (c.client_id == 0) continue;
      const double acc = accuracy(model, c.test_features, c.test_labels);
      if (c.vehicle_id == source.vehicle_id)
        same_total += acc;
      else
        cross_total += acc;
    }
  }
  CHECK(same_total / (5 * 2) > cross_total / (5 * 3));
}
