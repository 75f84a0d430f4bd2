#include "fedpc/evaluation.hpp"

#include <cstdio>
#include <ostream>

#include <nlohmann/json.hpp>

#include "fedpc/errors.hpp"
#include "fedpc/loss.hpp"
#include "fedpc/rng.hpp"

namespace fedpc {

double accuracy(const ParamVector& model, const Eigen::Ref<const Matrix>& features,
                const Eigen::Ref<const IntVector>& labels) {
  if (labels.size() == 0) throw EvalError("accuracy: empty evaluation set");
  if (features.cols() != labels.size())
    throw ShapeError("accuracy: feature/label count mismatch");
  const Matrix probs = forward_batch(model, features);
  long correct = 0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    int best = 0;
    for (Eigen::Index k = 1; k < probs.rows(); ++k)
      if (probs(k, i) > probs(best, i)) best = static_cast<int>(k);
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

MetricI metric_i(const ModelsById& models, const Federation& fed) {
  MetricI out;
  double total = 0.0;
  for (int c : fed.split.training_clients) {
    auto it = models.find(c);
    if (it == models.end()) {
      ++out.unvisited_count;
      continue;
    }
    const ClientDataset& ds = fed.client(c);
    const double acc = accuracy(it->second, ds.test_features, ds.test_labels);
    out.per_client[c] = acc;
    total += acc;
  }
  if (!out.per_client.empty())
    out.mean = total / static_cast<double>(out.per_client.size());
  return out;
}

MetricII metric_ii_p2p(const ModelsById& models, const Federation& fed,
                       MetricIIMode mode, std::uint64_t seed) {
  MetricII out;
  std::vector<int> visited;
  for (int c : fed.split.training_clients)
    if (models.count(c)) visited.push_back(c);
  if (visited.size() < 2) return out;

  std::vector<int> sources = visited;
  if (mode == MetricIIMode::random_single) {
    Rng rng(seed);
    sources = {visited[rng.uniform_below(visited.size())]};
  }

  double total = 0.0, same = 0.0, cross = 0.0;
  long n_total = 0, n_same = 0, n_cross = 0;
  for (int c : sources) {
    const ParamVector& model = models.at(c);
    for (int other : visited) {
      if (other == c) continue;
      const ClientDataset& ds = fed.client(other);
      const double acc = accuracy(model, ds.test_features, ds.test_labels);
      total += acc;
      ++n_total;
      if (fed.client(c).vehicle_id == ds.vehicle_id) {
        same += acc;
        ++n_same;
      } else {
        cross += acc;
        ++n_cross;
      }
    }
  }
  out.pair_count = n_total;
  out.mean = total / static_cast<double>(n_total);
  if (n_same > 0) out.same_vehicle = same / static_cast<double>(n_same);
  if (n_cross > 0) out.cross_vehicle = cross / static_cast<double>(n_cross);
  return out;
}

MetricII metric_ii_c2s(const ParamVector& global, const Federation& fed) {
  MetricII out;
  double total = 0.0;
  for (int c : fed.split.training_clients) {
    const ClientDataset& ds = fed.client(c);
    total += accuracy(global, ds.test_features, ds.test_labels);
    ++out.pair_count;
  }
  if (out.pair_count > 0)
    out.mean = total / static_cast<double>(out.pair_count);
  return out;
}

PersonalizationCurve metric_iii(const std::vector<ParamVector>& start_models,
                                const Federation& fed, int steps, double eta) {
  if (steps < 0) throw ConfigError("metric_iii: steps must be >= 0");
  if (start_models.empty()) throw ConfigError("metric_iii: no start models");
  PersonalizationCurve curve;
  curve.eta = eta;
  curve.mean.assign(steps + 1, 0.0);
  const LossConfig plain{0.0, 0.0};
  for (int tc : fed.split.test_clients)
    curve.per_client[tc].assign(steps + 1, 0.0);

  for (const ParamVector& start : start_models) {
    for (int tc : fed.split.test_clients) {
      const ClientDataset& ds = fed.client(tc);
      ParamVector w = start;
      for (int k = 0; k <= steps; ++k) {
        if (k > 0) {
          // One full-batch gradient-descent step on the client's train split.
          const LossGrad lg =
              total_loss_and_grad(w, w, ds.train_features, ds.train_labels, plain);
          const Eigen::Index t = w.trainable_count();
          w.values.tail(t) -= eta * lg.grad.tail(t);
        }
        curve.per_client[tc][k] += accuracy(w, ds.test_features, ds.test_labels);
      }
    }
  }

  const double m = static_cast<double>(start_models.size());
  for (auto& [tc, vals] : curve.per_client) {
    for (double& v : vals) v /= m;
    for (int k = 0; k <= steps; ++k) curve.mean[k] += vals[k];
  }
  const double nc = static_cast<double>(curve.per_client.size());
  if (nc > 0)
    for (double& v : curve.mean) v /= nc;
  return curve;
}

long CommLedger::total_transfers() const {
  long n = 0;
  for (const auto& r : rows) n += row_transfers(r);
  return n;
}

long CommLedger::total_bytes() const {
  long n = 0;
  for (const auto& r : rows) n += row_bytes(r);
  return n;
}

long payload_bytes(const ModelSpec& spec) {
  return 4L * (spec.total_params() - spec.frozen_param_count());
}

CommLedger p2p_ledger(const Schedule& schedule, const ModelSpec& spec) {
  CommLedger ledger;
  ledger.payload_bytes_per_model = payload_bytes(spec);
  ledger.rows.resize(schedule.rounds);
  for (int t = 0; t < schedule.rounds; ++t) ledger.rows[t].round = t;
  for (const auto& e : schedule.events) ++ledger.rows[e.round].p2p_transfers;
  return ledger;
}

CommLedger c2s_ledger(int rounds, int num_training_clients, const ModelSpec& spec) {
  CommLedger ledger;
  ledger.payload_bytes_per_model = payload_bytes(spec);
  for (int t = 0; t < rounds; ++t)
    ledger.rows.push_back({t, 0, num_training_clients, num_training_clients});
  return ledger;
}

CommLedger independent_ledger(int rounds, const ModelSpec& spec) {
  CommLedger ledger;
  ledger.payload_bytes_per_model = payload_bytes(spec);
  for (int t = 0; t < rounds; ++t) ledger.rows.push_back({t, 0, 0, 0});
  return ledger;
}

namespace {

nlohmann::json opt_json(const std::optional<double>& v) {
  if (v) return *v;
  return nullptr;
}

std::optional<double> opt_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["schema_version"] = report.schema_version;
  j["algorithm"] = report.algorithm;
  j["seed"] = report.seed;

  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : report.rounds) {
    nlohmann::json jr;
    jr["round"] = r.round;
    jr["metric_i_mean"] = opt_json(r.metric_i.mean);
    nlohmann::json per;
    for (const auto& [c, acc] : r.metric_i.per_client) per[std::to_string(c)] = acc;
    jr["metric_i_per_client"] = per.is_null() ? nlohmann::json::object() : per;
    jr["unvisited_count"] = r.metric_i.unvisited_count;
    jr["metric_ii"] = opt_json(r.metric_ii.mean);
    jr["metric_ii_same_vehicle"] = opt_json(r.metric_ii.same_vehicle);
    jr["metric_ii_cross_vehicle"] = opt_json(r.metric_ii.cross_vehicle);
    jr["metric_ii_pair_count"] = r.metric_ii.pair_count;
    rounds.push_back(jr);
  }
  j["rounds"] = rounds;

  nlohmann::json p;
  p["eta"] = report.personalization.eta;
  p["steps"] = static_cast<int>(report.personalization.mean.size()) - 1;
  p["mean_curve"] = report.personalization.mean;
  nlohmann::json per;
  for (const auto& [c, vals] : report.personalization.per_client)
    per[std::to_string(c)] = vals;
  p["per_client"] = per.is_null() ? nlohmann::json::object() : per;
  j["personalization"] = p;

  nlohmann::json led;
  led["payload_bytes_per_model"] = report.ledger.payload_bytes_per_model;
  nlohmann::json lrows = nlohmann::json::array();
  for (const auto& r : report.ledger.rows) {
    lrows.push_back({{"round", r.round},
                     {"p2p_transfers", r.p2p_transfers},
                     {"client_uplinks", r.client_uplinks},
                     {"server_downlinks", r.server_downlinks},
                     {"bytes", report.ledger.row_bytes(r)}});
  }
  led["rounds"] = lrows;
  led["total_transfers"] = report.ledger.total_transfers();
  led["total_bytes"] = report.ledger.total_bytes();
  j["ledger"] = led;

  j["unvisited_clients"] = report.unvisited_clients;
  return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport report;
  try {
    report.schema_version = j.at("schema_version").get<int>();
    if (report.schema_version != kReportSchemaVersion)
      throw SchemaError("unsupported schema_version " +
                        std::to_string(report.schema_version));
    report.algorithm = j.at("algorithm").get<std::string>();
    report.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& jr : j.at("rounds")) {
      RoundMetrics r;
      r.round = jr.at("round").get<int>();
      r.metric_i.mean = opt_from(jr.at("metric_i_mean"));
      for (const auto& [key, val] : jr.at("metric_i_per_client").items())
        r.metric_i.per_client[std::stoi(key)] = val.get<double>();
      r.metric_i.unvisited_count = jr.at("unvisited_count").get<int>();
      r.metric_ii.mean = opt_from(jr.at("metric_ii"));
      r.metric_ii.same_vehicle = opt_from(jr.at("metric_ii_same_vehicle"));
      r.metric_ii.cross_vehicle = opt_from(jr.at("metric_ii_cross_vehicle"));
      r.metric_ii.pair_count = jr.at("metric_ii_pair_count").get<long>();
      report.rounds.push_back(std::move(r));
    }
    const auto& p = j.at("personalization");
    report.personalization.eta = p.at("eta").get<double>();
    report.personalization.mean = p.at("mean_curve").get<std::vector<double>>();
    for (const auto& [key, val] : p.at("per_client").items())
      report.personalization.per_client[std::stoi(key)] =
          val.get<std::vector<double>>();
    const auto& led = j.at("ledger");
    report.ledger.payload_bytes_per_model =
        led.at("payload_bytes_per_model").get<long>();
    for (const auto& jr : led.at("rounds")) {
      LedgerRow r;
      r.round = jr.at("round").get<int>();
      r.p2p_transfers = jr.at("p2p_transfers").get<long>();
      r.client_uplinks = jr.at("client_uplinks").get<long>();
      r.server_downlinks = jr.at("server_downlinks").get<long>();
      report.ledger.rows.push_back(r);
    }
    report.unvisited_clients = j.at("unvisited_clients").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed report: ") + e.what());
  }
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

}  // namespace

void write_metrics_csv(std::ostream& out, const MetricsReport& report) {
  out << "section,index,metric_i_mean,metric_ii,metric_ii_same_vehicle,"
         "metric_ii_cross_vehicle,unvisited_count,personalization_mean_accuracy\n";
  for (const auto& r : report.rounds) {
    out << "round," << r.round << ',' << fmt(r.metric_i.mean) << ','
        << fmt(r.metric_ii.mean) << ',' << fmt(r.metric_ii.same_vehicle) << ','
        << fmt(r.metric_ii.cross_vehicle) << ',' << r.metric_i.unvisited_count
        << ",\n";
  }
  for (std::size_t k = 0; k < report.personalization.mean.size(); ++k) {
    out << "personalization," << k << ",,,,,," << fmt(report.personalization.mean[k])
        << "\n";
  }
}

void write_ledger_csv(std::ostream& out, const CommLedger& ledger) {
  out << "round,p2p_transfers,client_uplinks,server_downlinks,bytes\n";
  for (const auto& r : ledger.rows) {
    out << r.round << ',' << r.p2p_transfers << ',' << r.client_uplinks << ','
        << r.server_downlinks << ',' << ledger.row_bytes(r) << "\n";
  }
}

}  // namespace fedpc
