#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedpc/data.hpp"
#include "fedpc/evaluation.hpp"
#include "fedpc/loss.hpp"
#include "fedpc/model.hpp"
#include "fedpc/optim.hpp"
#include "fedpc/topology.hpp"

namespace fedpc {

enum class Algorithm { fedpc, ring, line, independent, fedavg, fedprox };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& name);

// How the initial model is produced. `pretrain` trains the full network
// once on a seeded generic synthetic task before freezing the prefix, so
// frozen layers carry transferable features; `random` freezes straight
// from the random init.
enum class InitMode { pretrain, random };

struct RunConfig {
  Algorithm algorithm = Algorithm::fedpc;
  int rounds = 5;
  int local_epochs = 5;
  int batch_size = 128;
  LossConfig loss;
  LearningSchedule lr;
  ModelSpec model;
  FederationConfig federation;
  std::string ingest_path;  // when set, replaces the synthetic federation
  std::uint64_t seed = 1;
  int personalization_steps = 5;
  double personalization_eta = 1e-3;
  MetricIIMode metric_ii_mode = MetricIIMode::all_pairs;
  InitMode init_mode = InitMode::pretrain;

  void validate() const;
};

struct ClientState {
  int client_id = 0;
  ParamVector model;
  int received_from = kSource;  // sender of the session's anchor
  int round = 0;
};

struct TrainResult {
  ParamVector model;
  long steps = 0;  // gradient steps taken: epochs * ceil(n / batch)
};

// One local training session: `epochs` seeded-shuffled passes over the
// train split in minibatches of `batch_size` (last batch may be smaller),
// Adam state fresh for the session, proximal anchor fixed throughout.
TrainResult train_local(const ParamVector& start, const ParamVector& anchor,
                        const Eigen::Ref<const Matrix>& features,
                        const Eigen::Ref<const IntVector>& labels, int epochs,
                        int batch_size, double eta, const LossConfig& loss_cfg,
                        std::uint64_t shuffle_seed);

// Seeded initial model (omega_0).
ParamVector initial_model(const ModelSpec& spec, std::uint64_t seed, InitMode mode);

// Shuffle-seed of one local session; every run derives its per-session
// randomness through this, so sessions can be reproduced in isolation.
std::uint64_t session_seed(std::uint64_t run_seed, int round, int step, int client);

// Component-wise weighted mean, weights normalized to sum 1.
ParamVector fedavg_aggregate(const std::vector<ParamVector>& models,
                             const std::vector<double>& weights);

struct RunResult {
  MetricsReport report;
  Federation federation;
  Schedule schedule;                       // P2P algorithms only
  std::map<int, ClientState> final_states;  // latest model per visited client
  std::vector<ClientState> history;         // one entry per training session
  ParamVector initial;                      // omega_0
  ParamVector final_model;  // chain model (P2P) or global model (C2S)
};

RunResult run_fedpc(const RunConfig& cfg);
RunResult run_ring(const RunConfig& cfg);
RunResult run_line(const RunConfig& cfg);
RunResult run_independent(const RunConfig& cfg);
RunResult run_fedavg(const RunConfig& cfg);
RunResult run_fedprox(const RunConfig& cfg);

// Dispatch on cfg.algorithm.
RunResult run(const RunConfig& cfg);

}  // namespace fedpc
