#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fedpc/data.hpp"
#include "fedpc/model.hpp"
#include "fedpc/topology.hpp"

namespace fedpc {

// Top-1 accuracy; argmax ties break toward the lowest class index.
double accuracy(const ParamVector& model, const Eigen::Ref<const Matrix>& features,
                const Eigen::Ref<const IntVector>& labels);

// Latest personalized model per visited training client.
using ModelsById = std::map<int, ParamVector>;

// Metric (i): each visited client's model on its own test split.
struct MetricI {
  std::map<int, double> per_client;
  std::optional<double> mean;  // empty when no client is visited
  int unvisited_count = 0;
};

MetricI metric_i(const ModelsById& models, const Federation& fed);

enum class MetricIIMode { all_pairs, random_single };

// Metric (ii): cross-client zero-shot accuracy. The P2P variant averages
// over ordered pairs of visited clients (or one seeded client's model in
// random_single mode) and also reports the same-vehicle / cross-vehicle
// breakdown; the C2S variant scores the global model on every training
// client's test split.
struct MetricII {
  std::optional<double> mean;
  std::optional<double> same_vehicle;
  std::optional<double> cross_vehicle;
  long pair_count = 0;
};

MetricII metric_ii_p2p(const ModelsById& models, const Federation& fed,
                       MetricIIMode mode = MetricIIMode::all_pairs,
                       std::uint64_t seed = 0);
MetricII metric_ii_c2s(const ParamVector& global, const Federation& fed);

// Metric (iii): new-client accuracy over personalization steps 0..K.
// Each start model is personalized independently on each test client with
// k full-batch gradient-descent steps (NLL only, fixed eta); the curve is
// the mean over (start model, test client) pairs.
struct PersonalizationCurve {
  double eta = 1e-3;
  std::vector<double> mean;                      // K+1 points
  std::map<int, std::vector<double>> per_client;  // test client -> K+1
};

PersonalizationCurve metric_iii(const std::vector<ParamVector>& start_models,
                                const Federation& fed, int steps, double eta);

// Communication ledger: per-round transfer counts times a
// fixed per-model payload of 4 bytes per trainable scalar (frozen scalars
// are not transmitted).
struct LedgerRow {
  int round = 0;
  long p2p_transfers = 0;
  long client_uplinks = 0;
  long server_downlinks = 0;
};

struct CommLedger {
  long payload_bytes_per_model = 0;
  std::vector<LedgerRow> rows;

  long row_transfers(const LedgerRow& r) const {
    return r.p2p_transfers + r.client_uplinks + r.server_downlinks;
  }
  long row_bytes(const LedgerRow& r) const {
    return row_transfers(r) * payload_bytes_per_model;
  }
  long total_transfers() const;
  long total_bytes() const;
};

long payload_bytes(const ModelSpec& spec);

CommLedger p2p_ledger(const Schedule& schedule, const ModelSpec& spec);
CommLedger c2s_ledger(int rounds, int num_training_clients, const ModelSpec& spec);
CommLedger independent_ledger(int rounds, const ModelSpec& spec);

struct RoundMetrics {
  int round = 0;
  MetricI metric_i;
  MetricII metric_ii;
};

inline constexpr int kReportSchemaVersion = 1;

struct MetricsReport {
  int schema_version = kReportSchemaVersion;
  std::string algorithm;
  std::uint64_t seed = 0;
  std::vector<RoundMetrics> rounds;
  PersonalizationCurve personalization;
  CommLedger ledger;
  std::vector<int> unvisited_clients;  // never scheduled over the whole run
};

nlohmann::json to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

// Per-round table plus the personalization curve, one CSV (see README).
void write_metrics_csv(std::ostream& out, const MetricsReport& report);
void write_ledger_csv(std::ostream& out, const CommLedger& ledger);

}  // namespace fedpc
