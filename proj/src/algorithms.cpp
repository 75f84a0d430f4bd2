#include "fedpc/algorithms.hpp"

#include <algorithm>
#include <numeric>

#include "fedpc/errors.hpp"
#include "fedpc/rng.hpp"

namespace fedpc {
namespace {

constexpr std::uint64_t kInitStream = fnv1a("init");
constexpr std::uint64_t kPretrainStream = fnv1a("pretrain");
constexpr std::uint64_t kScheduleStream = fnv1a("schedule");
constexpr std::uint64_t kLocalStream = fnv1a("local");
constexpr std::uint64_t kClientSplitStream = fnv1a("client_split");
constexpr std::uint64_t kMetricStream = fnv1a("metric");

// Generic pretraining task (the ImageNet analogue): seeded Gaussian blobs
// with the same input dimension and class count as the model, unrelated to
// any federation's class geometry.
constexpr int kPretrainPerClass = 48;
constexpr int kPretrainEpochs = 40;
constexpr int kPretrainBatch = 32;
constexpr double kPretrainEta = 2e-3;
constexpr double kPretrainCenterScale = 3.0;
constexpr double kPretrainNoise = 0.5;

ModelsById latest_models(const std::map<int, ClientState>& states) {
  ModelsById models;
  for (const auto& [id, st] : states) models.emplace(id, st.model);
  return models;
}

ModelsById broadcast_models(const ParamVector& global, const std::vector<int>& clients) {
  ModelsById models;
  for (int c : clients) models.emplace(c, global);
  return models;
}

}  // namespace

std::uint64_t session_seed(std::uint64_t run_seed, int round, int step, int client) {
  return derive_seed(run_seed, {kLocalStream, static_cast<std::uint64_t>(round),
                                static_cast<std::uint64_t>(step),
                                static_cast<std::uint64_t>(client)});
}

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::fedpc: return "fedpc";
    case Algorithm::ring: return "ring";
    case Algorithm::line: return "line";
    case Algorithm::independent: return "independent";
    case Algorithm::fedavg: return "fedavg";
    case Algorithm::fedprox: return "fedprox";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "fedpc") return Algorithm::fedpc;
  if (name == "ring") return Algorithm::ring;
  if (name == "line") return Algorithm::line;
  if (name == "independent") return Algorithm::independent;
  if (name == "fedavg") return Algorithm::fedavg;
  if (name == "fedprox") return Algorithm::fedprox;
  throw ConfigError("unknown algorithm '" + name + "'");
}

void RunConfig::validate() const {
  if (rounds < 1) throw ConfigError("run: rounds must be >= 1");
  if (algorithm == Algorithm::line && rounds != 1)
    throw ConfigError("run: line topology is a single-round ring; set rounds = 1");
  if (local_epochs < 1) throw ConfigError("run: local_epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("run: batch_size must be >= 1");
  if (personalization_steps < 0)
    throw ConfigError("run: personalization_steps must be >= 0");
  if (personalization_eta <= 0.0)
    throw ConfigError("run: personalization_eta must be positive");
  loss.validate();
  lr.validate();
  model.validate();
  if (ingest_path.empty()) {
    federation.validate();
    if (model.input_dim() != federation.feature_dim)
      throw ConfigError("run: model input dim != federation feature_dim");
    if (model.num_classes() != federation.classes)
      throw ConfigError("run: model class count != federation classes");
  }
}

TrainResult train_local(const ParamVector& start, const ParamVector& anchor,
                        const Eigen::Ref<const Matrix>& features,
                        const Eigen::Ref<const IntVector>& labels, int epochs,
                        int batch_size, double eta, const LossConfig& loss_cfg,
                        std::uint64_t shuffle_seed) {
  const Eigen::Index n = labels.size();
  if (n == 0) throw ConfigError("train: empty train split");
  if (features.cols() != n) throw ShapeError("train: feature/label count mismatch");
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");

  TrainResult result{start, 0};
  if (epochs == 0) return result;

  AdamState adam = AdamState::init(start.size());
  Rng rng(shuffle_seed);
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int e = 0; e < epochs; ++e) {
    rng.shuffle(order);
    for (Eigen::Index at = 0; at < n; at += batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(batch_size, n - at);
      Matrix bx(features.rows(), b);
      IntVector by(b);
      for (Eigen::Index i = 0; i < b; ++i) {
        bx.col(i) = features.col(order[at + i]);
        by[i] = labels[order[at + i]];
      }
      const LossGrad lg = total_loss_and_grad(result.model, anchor, bx, by, loss_cfg);
      adam_step(result.model, lg.grad, adam, eta);
      ++result.steps;
    }
  }
  return result;
}

ParamVector initial_model(const ModelSpec& spec, std::uint64_t seed, InitMode mode) {
  ParamVector p = glorot_init(spec, derive_seed(seed, {kInitStream}));
  if (mode == InitMode::random) return p;

  const int d = spec.input_dim();
  const int k = spec.num_classes();
  Rng rng(derive_seed(seed, {kPretrainStream}));
  Matrix features(d, static_cast<Eigen::Index>(k) * kPretrainPerClass);
  IntVector labels(features.cols());
  Eigen::Index col = 0;
  for (int c = 0; c < k; ++c) {
    const Vector center = kPretrainCenterScale * rng.unit_vector(d);
    for (int i = 0; i < kPretrainPerClass; ++i, ++col) {
      features.col(col) = center + kPretrainNoise * rng.normal_vector(d);
      labels[col] = c;
    }
  }
  ParamVector pre = train_local(p, p, features, labels, kPretrainEpochs,
                                kPretrainBatch, kPretrainEta, LossConfig{0.0, 0.0},
                                derive_seed(seed, {kPretrainStream, 1}))
                        .model;

  // New-task head: the pretrained classifier maps to the generic task's
  // classes, so the final layer restarts from a fresh init.
  const ParamVector fresh = glorot_init(spec, derive_seed(seed, {kInitStream, 1}));
  const int head = spec.num_weight_layers() - 1;
  pre.weight(head) = fresh.weight(head);
  pre.bias(head) = fresh.bias(head);
  return pre;
}

ParamVector fedavg_aggregate(const std::vector<ParamVector>& models,
                             const std::vector<double>& weights) {
  if (models.empty()) throw AggregationError("aggregate: no models");
  if (models.size() != weights.size())
    throw AggregationError("aggregate: model/weight count mismatch");
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw AggregationError("aggregate: negative weight");
    total += w;
  }
  if (total <= 0.0) throw AggregationError("aggregate: weights sum to zero");

  ParamVector out = models.front();
  out.values.setZero();
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].values.size() != out.values.size() || models[i].spec != out.spec)
      throw AggregationError("aggregate: model length mismatch");
    out.values += (weights[i] / total) * models[i].values;
  }
  return out;
}

namespace {

struct RunContext {
  RunConfig cfg;
  Federation federation;
  ParamVector initial;
};

RunContext prepare(const RunConfig& cfg) {
  cfg.validate();
  RunContext ctx{cfg, {}, {}};
  if (!cfg.ingest_path.empty()) {
    Federation fed;
    fed.clients = ingest_feature_table(cfg.ingest_path);
    // Ingested ids may be sparse; keep them addressable by id.
    int max_id = 0;
    for (const auto& c : fed.clients) max_id = std::max(max_id, c.client_id);
    std::vector<ClientDataset> dense(max_id + 1);
    std::vector<int> ids;
    for (auto& c : fed.clients) {
      ids.push_back(c.client_id);
      dense[c.client_id] = std::move(c);
    }
    fed.clients = std::move(dense);
    if (ids.size() < 2) throw ConfigError("run: need at least 2 ingested clients");

    std::vector<int> shuffled = ids;
    Rng rng(derive_seed(cfg.seed, {kClientSplitStream}));
    rng.shuffle(shuffled);
    const int n_test = std::max(1, static_cast<int>(ids.size()) / 5);
    fed.split.test_clients.assign(shuffled.begin(), shuffled.begin() + n_test);
    fed.split.training_clients.assign(shuffled.begin() + n_test, shuffled.end());
    std::sort(fed.split.test_clients.begin(), fed.split.test_clients.end());
    std::sort(fed.split.training_clients.begin(), fed.split.training_clients.end());

    const Eigen::Index dim = fed.client(ids.front()).train_features.rows();
    if (dim != cfg.model.input_dim())
      throw ConfigError("run: model input dim != ingested feature dim");
    int max_label = 0;
    for (int id : ids) {
      const ClientDataset& ds = fed.client(id);
      max_label = std::max<int>(max_label, ds.train_labels.maxCoeff());
      if (ds.test_count() > 0)
        max_label = std::max<int>(max_label, ds.test_labels.maxCoeff());
    }
    if (max_label >= cfg.model.num_classes())
      throw ConfigError("run: ingested label " + std::to_string(max_label) +
                        " exceeds model class count");
    ctx.federation = std::move(fed);
  } else {
    ctx.federation = generate_federation(cfg.federation);
  }
  ctx.initial = initial_model(cfg.model, cfg.seed, cfg.init_mode);
  return ctx;
}

// FedPC, ring and line share the chain runner; they differ only in the
// schedule. The model is a single token: every session's anchor is the
// previous session's output (omega_0 for the first), and the proximal
// term applies from the second chain event onward.
RunResult run_chain(RunContext ctx, Schedule schedule) {
  const RunConfig& cfg = ctx.cfg;
  RunResult result;
  result.federation = std::move(ctx.federation);
  result.initial = ctx.initial;
  result.schedule = std::move(schedule);
  result.report.algorithm = to_string(cfg.algorithm);
  result.report.seed = cfg.seed;
  result.report.ledger = p2p_ledger(result.schedule, cfg.model);

  ParamVector chain = ctx.initial;
  std::size_t next_event = 0;
  for (int t = 0; t < cfg.rounds; ++t) {
    const double eta = learning_rate(cfg.lr, t);
    for (; next_event < result.schedule.events.size() &&
           result.schedule.events[next_event].round == t;
         ++next_event) {
      const TransmissionEvent& e = result.schedule.events[next_event];
      LossConfig loss_cfg = cfg.loss;
      if (e.sender == kSource) loss_cfg.mu = 0.0;  // no prior client model yet
      const ClientDataset& ds = result.federation.client(e.receiver);
      chain = train_local(chain, chain, ds.train_features, ds.train_labels,
                          cfg.local_epochs, cfg.batch_size, eta, loss_cfg,
                          session_seed(cfg.seed, e.round, e.step, e.receiver))
                  .model;
      ClientState state{e.receiver, chain, e.sender, e.round};
      result.final_states[e.receiver] = state;
      result.history.push_back(std::move(state));
    }

    RoundMetrics rm;
    rm.round = t;
    const ModelsById models = latest_models(result.final_states);
    rm.metric_i = metric_i(models, result.federation);
    rm.metric_ii = metric_ii_p2p(
        models, result.federation, cfg.metric_ii_mode,
        derive_seed(cfg.seed, {kMetricStream, static_cast<std::uint64_t>(t)}));
    result.report.rounds.push_back(std::move(rm));
  }

  result.final_model = chain;
  result.report.personalization =
      metric_iii({chain}, result.federation, cfg.personalization_steps,
                 cfg.personalization_eta);
  for (int c : result.federation.split.training_clients)
    if (!result.final_states.count(c)) result.report.unvisited_clients.push_back(c);
  return result;
}

RunResult run_c2s(RunContext ctx, bool proximal) {
  const RunConfig& cfg = ctx.cfg;
  RunResult result;
  result.federation = std::move(ctx.federation);
  result.initial = ctx.initial;
  result.report.algorithm = to_string(cfg.algorithm);
  result.report.seed = cfg.seed;
  const auto& training = result.federation.split.training_clients;
  result.report.ledger =
      c2s_ledger(cfg.rounds, static_cast<int>(training.size()), cfg.model);

  LossConfig loss_cfg = cfg.loss;
  if (!proximal) loss_cfg.mu = 0.0;

  ParamVector global = ctx.initial;
  for (int t = 0; t < cfg.rounds; ++t) {
    const double eta = learning_rate(cfg.lr, t);
    std::vector<ParamVector> locals;
    std::vector<double> weights;
    for (int c : training) {
      const ClientDataset& ds = result.federation.client(c);
      TrainResult tr =
          train_local(global, global, ds.train_features, ds.train_labels,
                      cfg.local_epochs, cfg.batch_size, eta, loss_cfg,
                      session_seed(cfg.seed, t, 0, c));
      result.history.push_back({c, tr.model, kSource, t});
      locals.push_back(std::move(tr.model));
      weights.push_back(static_cast<double>(ds.train_count()));
    }
    global = fedavg_aggregate(locals, weights);

    RoundMetrics rm;
    rm.round = t;
    rm.metric_i = metric_i(broadcast_models(global, training), result.federation);
    rm.metric_ii = metric_ii_c2s(global, result.federation);
    result.report.rounds.push_back(std::move(rm));
  }

  for (int c : training) result.final_states[c] = {c, global, kSource, cfg.rounds - 1};
  result.final_model = global;
  result.report.personalization =
      metric_iii({global}, result.federation, cfg.personalization_steps,
                 cfg.personalization_eta);
  return result;
}

}  // namespace

RunResult run_fedpc(const RunConfig& cfg) {
  RunContext ctx = prepare(cfg);
  Schedule schedule =
      gossip_schedule(ctx.federation.split.training_clients, cfg.rounds,
                      derive_seed(cfg.seed, {kScheduleStream}));
  return run_chain(std::move(ctx), std::move(schedule));
}

RunResult run_ring(const RunConfig& cfg) {
  RunContext ctx = prepare(cfg);
  Schedule schedule = ring_schedule(ctx.federation.split.training_clients, cfg.rounds);
  return run_chain(std::move(ctx), std::move(schedule));
}

RunResult run_line(const RunConfig& cfg) {
  RunContext ctx = prepare(cfg);
  Schedule schedule = line_schedule(ctx.federation.split.training_clients);
  return run_chain(std::move(ctx), std::move(schedule));
}

RunResult run_independent(const RunConfig& cfg) {
  RunContext ctx = prepare(cfg);
  const RunConfig& c = ctx.cfg;
  RunResult result;
  result.federation = std::move(ctx.federation);
  result.initial = ctx.initial;
  result.report.algorithm = to_string(c.algorithm);
  result.report.seed = c.seed;
  const auto& training = result.federation.split.training_clients;
  result.report.ledger = independent_ledger(c.rounds, c.model);

  // No communication: anchor stays omega_0 and mu is forced to zero.
  const LossConfig loss_cfg{0.0, c.loss.weight_decay};
  std::map<int, ParamVector> models;
  for (int id : training) models.emplace(id, ctx.initial);

  for (int t = 0; t < c.rounds; ++t) {
    const double eta = learning_rate(c.lr, t);
    for (int id : training) {
      const ClientDataset& ds = result.federation.client(id);
      models.at(id) = train_local(models.at(id), ctx.initial, ds.train_features,
                                  ds.train_labels, c.local_epochs, c.batch_size,
                                  eta, loss_cfg, session_seed(c.seed, t, 0, id))
                          .model;
      result.history.push_back({id, models.at(id), kSource, t});
    }
    RoundMetrics rm;
    rm.round = t;
    rm.metric_i = metric_i(models, result.federation);
    rm.metric_ii = metric_ii_p2p(
        models, result.federation, c.metric_ii_mode,
        derive_seed(c.seed, {kMetricStream, static_cast<std::uint64_t>(t)}));
    result.report.rounds.push_back(std::move(rm));
  }

  for (int id : training)
    result.final_states[id] = {id, models.at(id), kSource, c.rounds - 1};
  result.final_model = ctx.initial;

  // Every client is its own system output; personalize from each.
  std::vector<ParamVector> starts;
  for (int id : training) starts.push_back(models.at(id));
  result.report.personalization = metric_iii(
      starts, result.federation, c.personalization_steps, c.personalization_eta);
  return result;
}

RunResult run_fedavg(const RunConfig& cfg) { return run_c2s(prepare(cfg), false); }

RunResult run_fedprox(const RunConfig& cfg) { return run_c2s(prepare(cfg), true); }

RunResult run(const RunConfig& cfg) {
  switch (cfg.algorithm) {
    case Algorithm::fedpc: return run_fedpc(cfg);
    case Algorithm::ring: return run_ring(cfg);
    case Algorithm::line: return run_line(cfg);
    case Algorithm::independent: return run_independent(cfg);
    case Algorithm::fedavg: return run_fedavg(cfg);
    case Algorithm::fedprox: return run_fedprox(cfg);
  }
  throw ConfigError("run: unknown algorithm");
}

}  // namespace fedpc
