#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedpc/math.hpp"

namespace fedpc {

// Synthetic federation with two-level heterogeneity: vehicles are
// well-separated clusters (system heterogeneity), drivers within a vehicle
// get per-client offsets (statistical heterogeneity), and all clients share
// the same class geometry so there is a common task to learn federatively.
struct FederationConfig {
  int num_vehicles = 3;
  int drivers_per_vehicle = 4;
  int classes = 4;
  int feature_dim = 16;
  int samples_per_client_per_class = 50;
  double cluster_separation = 6.0;  // exact pairwise centroid distance
  double driver_dispersion = 1.0;   // norm of each per-driver offset
  double noise_sigma = 0.25;
  std::uint64_t seed = 1;

  int num_clients() const { return num_vehicles * drivers_per_vehicle; }
  void validate() const;
};

struct ClientDataset {
  int client_id = 0;
  int vehicle_id = 0;
  Matrix train_features;  // feature_dim x n_train, columns are samples
  IntVector train_labels;
  Matrix test_features;
  IntVector test_labels;

  Eigen::Index train_count() const { return train_labels.size(); }
  Eigen::Index test_count() const { return test_labels.size(); }
};

struct FederationSplit {
  std::vector<int> training_clients;  // ascending ids
  std::vector<int> test_clients;
};

struct Federation {
  std::vector<ClientDataset> clients;  // indexed by client_id
  FederationSplit split;

  const ClientDataset& client(int id) const { return clients.at(id); }
};

// Stratified per-client 0.8/0.2 sample split. `dataset` arrives with all
// samples in the train arrays; roughly 20% (at least one sample) move to
// the test arrays, keeping every class present in the train split.
void split_client_samples(ClientDataset& dataset, std::uint64_t seed);

// Client-level 0.8/0.2 partition followed by per-client sample splits.
// The test side takes max(1, floor(0.2 * n)) clients.
FederationSplit double_split(std::vector<ClientDataset>& clients, std::uint64_t seed);

Federation generate_federation(const FederationConfig& cfg);

// CSV escape hatch for pre-extracted features. Header:
//   client_id,label,f0,...,f{d-1}
// One ClientDataset per distinct client_id, vehicle_id 0, per-client
// 0.8/0.2 split seeded by order of first appearance in the file.
std::vector<ClientDataset> ingest_feature_table(const std::string& path);

// Inverse of ingest: writes train then test rows per client, full precision.
void export_feature_table(std::ostream& out, const std::vector<ClientDataset>& clients);
void export_feature_table(const std::string& path, const std::vector<ClientDataset>& clients);

}  // namespace fedpc
