#include "fedpc/data.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "fedpc/errors.hpp"
#include "fedpc/rng.hpp"

namespace fedpc {
namespace {

// Fraction of a vehicle centroid that leans into the class subspace. This
// couples system heterogeneity to the classification geometry: crossing
// vehicles shifts samples along class axes, so a classifier calibrated on
// one vehicle degrades more on the other vehicle than on its own.
constexpr double kVehicleClassTilt = 0.15;

constexpr std::uint64_t kClientStream = fnv1a("client");
constexpr std::uint64_t kCentroidStream = fnv1a("centroid");
constexpr std::uint64_t kSplitStream = fnv1a("split");
constexpr std::uint64_t kClientSplitStream = fnv1a("clients");
constexpr std::uint64_t kSampleSplitStream = fnv1a("samples");
constexpr std::uint64_t kIngestStream = fnv1a("ingest");

int test_count_for(int total) {
  return std::max(1, total / 5);  // floor(0.2 n), at least 1
}

}  // namespace

void FederationConfig::validate() const {
  if (num_vehicles < 1) throw ConfigError("federation: num_vehicles must be >= 1");
  if (drivers_per_vehicle < 1)
    throw ConfigError("federation: drivers_per_vehicle must be >= 1");
  if (num_clients() < 2)
    throw ConfigError("federation: need at least 2 clients (vehicles x drivers)");
  if (classes < 2) throw ConfigError("federation: classes must be >= 2");
  if (feature_dim < num_vehicles + classes)
    throw ConfigError(
        "federation: feature_dim must be >= num_vehicles + classes to embed "
        "cluster and class axes");
  if (samples_per_client_per_class < 1)
    throw ConfigError("federation: samples_per_client_per_class must be >= 1");
  if (cluster_separation <= 0.0)
    throw ConfigError("federation: cluster_separation must be positive");
  if (driver_dispersion < 0.0)
    throw ConfigError("federation: driver_dispersion must be >= 0");
  if (cluster_separation <= driver_dispersion)
    throw ConfigError("federation: cluster_separation must exceed driver_dispersion");
  if (noise_sigma <= 0.0)
    throw ConfigError("federation: noise_sigma must be positive");
}

void split_client_samples(ClientDataset& dataset, std::uint64_t seed) {
  const Eigen::Index n = dataset.train_labels.size();
  if (n < 1) throw ConfigError("split: client has no samples");
  if (dataset.test_labels.size() != 0)
    throw ConfigError("split: client already split");

  // Indices per class, in order of appearance.
  std::map<int, std::vector<Eigen::Index>> strata;
  for (Eigen::Index i = 0; i < n; ++i) strata[dataset.train_labels[i]].push_back(i);

  // floor(0.2 n) overall (min 1), allocated per class by largest remaining
  // train count so every class keeps at least one train sample.
  const int target = test_count_for(static_cast<int>(n));
  std::map<int, int> take;
  int allocated = 0;
  for (auto& [label, idx] : strata) {
    take[label] = static_cast<int>(idx.size()) / 5;
    allocated += take[label];
  }
  while (allocated < target) {
    int best = -1;
    Eigen::Index best_remaining = 1;  // must leave >= 1 train sample
    for (auto& [label, idx] : strata) {
      const Eigen::Index remaining = static_cast<Eigen::Index>(idx.size()) - take[label];
      if (remaining > best_remaining) {
        best = label;
        best_remaining = remaining;
      }
    }
    if (best < 0) break;  // nothing left to take without emptying a class
    ++take[best];
    ++allocated;
  }

  Rng rng(seed);
  std::vector<bool> to_test(n, false);
  for (auto& [label, idx] : strata) {
    std::vector<Eigen::Index> shuffled = idx;
    rng.shuffle(shuffled);
    for (int k = 0; k < take[label]; ++k) to_test[shuffled[k]] = true;
  }

  const Eigen::Index n_test = allocated;
  const Eigen::Index n_train = n - n_test;
  Matrix train_f(dataset.train_features.rows(), n_train);
  Matrix test_f(dataset.train_features.rows(), n_test);
  IntVector train_l(n_train), test_l(n_test);
  Eigen::Index a = 0, b = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (to_test[i]) {
      test_f.col(b) = dataset.train_features.col(i);
      test_l[b++] = dataset.train_labels[i];
    } else {
      train_f.col(a) = dataset.train_features.col(i);
      train_l[a++] = dataset.train_labels[i];
    }
  }
  dataset.train_features = std::move(train_f);
  dataset.train_labels = std::move(train_l);
  dataset.test_features = std::move(test_f);
  dataset.test_labels = std::move(test_l);
}

FederationSplit double_split(std::vector<ClientDataset>& clients, std::uint64_t seed) {
  const int n = static_cast<int>(clients.size());
  if (n < 2) throw ConfigError("split: need at least 2 clients");

  std::vector<int> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = clients[i].client_id;
  std::vector<int> shuffled = ids;
  Rng rng(derive_seed(seed, {kClientSplitStream}));
  rng.shuffle(shuffled);

  const int n_test = test_count_for(n);
  FederationSplit split;
  split.test_clients.assign(shuffled.begin(), shuffled.begin() + n_test);
  split.training_clients.assign(shuffled.begin() + n_test, shuffled.end());
  std::sort(split.test_clients.begin(), split.test_clients.end());
  std::sort(split.training_clients.begin(), split.training_clients.end());

  for (auto& c : clients)
    split_client_samples(
        c, derive_seed(seed, {kSampleSplitStream, static_cast<std::uint64_t>(c.client_id)}));
  return split;
}

Federation generate_federation(const FederationConfig& cfg) {
  cfg.validate();
  const int d = cfg.feature_dim;
  const int V = cfg.num_vehicles;
  const int K = cfg.classes;

  // Vehicle centroids: axis-aligned placement scaled so pairwise distances
  // equal cluster_separation, tilted slightly into the class subspace.
  std::vector<Vector> centroids(V);
  const double scale = cfg.cluster_separation / std::sqrt(2.0);
  const double axis_part = std::sqrt(1.0 - kVehicleClassTilt * kVehicleClassTilt);
  for (int v = 0; v < V; ++v) {
    Vector c = Vector::Zero(d);
    c[v] = scale * axis_part;
    Rng crng(derive_seed(cfg.seed, {kCentroidStream, static_cast<std::uint64_t>(v)}));
    c.segment(V, K) = scale * kVehicleClassTilt * crng.unit_vector(K);
    centroids[v] = c;
  }

  // Shared class geometry: one orthogonal axis per class.
  std::vector<Vector> class_dirs(K);
  for (int c = 0; c < K; ++c) {
    class_dirs[c] = Vector::Zero(d);
    class_dirs[c][V + c] = 1.0;
  }

  Federation fed;
  fed.clients.resize(cfg.num_clients());
  const int s = cfg.samples_per_client_per_class;
  for (int v = 0; v < V; ++v) {
    for (int j = 0; j < cfg.drivers_per_vehicle; ++j) {
      const int id = v * cfg.drivers_per_vehicle + j;
      Rng rng(derive_seed(cfg.seed, {kClientStream, static_cast<std::uint64_t>(id)}));

      // Driver offset: fixed norm, supported outside the class subspace so
      // statistical heterogeneity does not move samples along class axes.
      Vector offset = Vector::Zero(d);
      if (cfg.driver_dispersion > 0.0) {
        const Eigen::Index rest = d - K;
        Vector dir = rng.unit_vector(rest);
        offset.head(V) = dir.head(V);
        if (rest > V) offset.tail(rest - V) = dir.tail(rest - V);
        offset *= cfg.driver_dispersion;
      }

      ClientDataset ds;
      ds.client_id = id;
      ds.vehicle_id = v;
      ds.train_features.resize(d, static_cast<Eigen::Index>(K) * s);
      ds.train_labels.resize(static_cast<Eigen::Index>(K) * s);
      Eigen::Index col = 0;
      for (int c = 0; c < K; ++c) {
        const Vector mean = centroids[v] + offset + class_dirs[c];
        for (int i = 0; i < s; ++i, ++col) {
          ds.train_features.col(col) = mean + cfg.noise_sigma * rng.normal_vector(d);
          ds.train_labels[col] = c;
        }
      }
      fed.clients[id] = std::move(ds);
    }
  }

  fed.split = double_split(fed.clients, derive_seed(cfg.seed, {kSplitStream}));
  return fed;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& field, int line_no) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw ParseError("line " + std::to_string(line_no) + ": field '" + field +
                     "' is not numeric");
  return value;
}

int parse_int(const std::string& field, int line_no) {
  int value = 0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw ParseError("line " + std::to_string(line_no) + ": field '" + field +
                     "' is not an integer");
  return value;
}

}  // namespace

std::vector<ClientDataset> ingest_feature_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "client_id" || header[1] != "label")
    throw ParseError("line 1: expected header client_id,label,f0,...");
  const int dim = static_cast<int>(header.size()) - 2;
  for (int i = 0; i < dim; ++i)
    if (header[2 + i] != "f" + std::to_string(i))
      throw ParseError("line 1: unknown header column '" + header[2 + i] + "'");

  struct Rows {
    int order;
    std::vector<Vector> features;
    std::vector<int> labels;
  };
  std::map<int, Rows> by_client;
  int order = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != dim + 2)
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(dim + 2) + " fields, got " +
                       std::to_string(fields.size()));
    const int client = parse_int(fields[0], line_no);
    const int label = parse_int(fields[1], line_no);
    if (label < 0)
      throw ParseError("line " + std::to_string(line_no) + ": negative label");
    Vector x(dim);
    for (int i = 0; i < dim; ++i) x[i] = parse_double(fields[2 + i], line_no);
    auto it = by_client.find(client);
    if (it == by_client.end())
      it = by_client.emplace(client, Rows{order++, {}, {}}).first;
    it->second.features.push_back(std::move(x));
    it->second.labels.push_back(label);
  }
  if (by_client.empty()) throw ParseError(path + ": no data rows");

  std::vector<ClientDataset> clients;
  clients.reserve(by_client.size());
  for (auto& [id, rows] : by_client) {
    ClientDataset ds;
    ds.client_id = id;
    ds.vehicle_id = 0;
    const Eigen::Index n = static_cast<Eigen::Index>(rows.labels.size());
    ds.train_features.resize(dim, n);
    ds.train_labels.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      ds.train_features.col(i) = rows.features[i];
      ds.train_labels[i] = rows.labels[i];
    }
    split_client_samples(
        ds, derive_seed(kIngestStream, {static_cast<std::uint64_t>(rows.order)}));
    clients.push_back(std::move(ds));
  }
  return clients;
}

void export_feature_table(std::ostream& out, const std::vector<ClientDataset>& clients) {
  if (clients.empty()) throw ConfigError("export: no clients");
  const Eigen::Index dim = clients.front().train_features.rows();
  out << "client_id,label";
  for (Eigen::Index i = 0; i < dim; ++i) out << ",f" << i;
  out << "\n";
  char buf[32];
  auto write_block = [&](const ClientDataset& c, const Matrix& f, const IntVector& l) {
    for (Eigen::Index i = 0; i < l.size(); ++i) {
      out << c.client_id << ',' << l[i];
      for (Eigen::Index j = 0; j < dim; ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", f(j, i));
        out << ',' << buf;
      }
      out << "\n";
    }
  };
  for (const auto& c : clients) {
    write_block(c, c.train_features, c.train_labels);
    write_block(c, c.test_features, c.test_labels);
  }
}

void export_feature_table(const std::string& path, const std::vector<ClientDataset>& clients) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  export_feature_table(out, clients);
}

}  // namespace fedpc
