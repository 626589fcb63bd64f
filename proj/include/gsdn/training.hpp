#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "gsdn/gcn.hpp"
#include "gsdn/graph.hpp"
#include "gsdn/model.hpp"
#include "gsdn/objectives.hpp"
#include "gsdn/optimizer.hpp"

namespace gsdn {

/// Every training hyperparameter and seed; serializes losslessly to JSON.
struct TrainConfig {
  double lr = 0.01;
  double weight_decay = 5e-4;
  std::size_t epochs = 200;
  std::size_t layers = 2;
  std::size_t hidden = 64;
  std::size_t batch_size = 512;
  double lambda = 1.0;
  double dropout = 0.1;
  std::size_t k_negatives = 1;
  NegativeKind negative_dist = NegativeKind::uniform;
  std::uint64_t seed = 1;
  std::string precision = "f32";  // "f32" | "f64"
  int threads = 1;
  AblationFlags ablation;

  void validate() const {
    if (lr <= 0.0) throw config_error("lr must be > 0");
    if (weight_decay < 0.0) throw config_error("weight_decay must be >= 0");
    if (epochs < 1) throw config_error("epochs must be >= 1");
    if (layers < 1) throw config_error("layers must be >= 1");
    if (hidden < 1) throw config_error("hidden must be >= 1");
    if (batch_size < 1) throw config_error("batch_size must be >= 1");
    if (lambda < 0.0) throw config_error("lambda must be >= 0");
    if (dropout < 0.0 || dropout >= 1.0) throw config_error("dropout must be in [0,1)");
    if (k_negatives < 1) throw config_error("k_negatives must be >= 1");
    if (threads < 1) throw config_error("threads must be >= 1");
    if (precision != "f32" && precision != "f64")
      throw config_error("precision must be f32 or f64");
  }

  /// Plain-MLP baseline: feature term off, mixup and negatives off,
  /// neighbor label terms off. Reduces training to per-node CE.
  TrainConfig mlp_mode() const {
    TrainConfig c = *this;
    c.lambda = 0.0;
    c.ablation.no_negative_samples = true;
    c.ablation.no_mixup = true;
    c.ablation.no_label_distill = true;
    return c;
  }
};

inline void to_json(nlohmann::json& j, const AblationFlags& f) {
  j = nlohmann::json{{"no_negative_samples", f.no_negative_samples},
                     {"no_mixup", f.no_mixup},
                     {"no_label_distill", f.no_label_distill},
                     {"mixup_off_uses_neighbor", f.mixup_off_uses_neighbor},
                     {"normalize_both", f.normalize_both}};
}

inline void from_json(const nlohmann::json& j, AblationFlags& f) {
  f.no_negative_samples = j.value("no_negative_samples", false);
  f.no_mixup = j.value("no_mixup", false);
  f.no_label_distill = j.value("no_label_distill", false);
  f.mixup_off_uses_neighbor = j.value("mixup_off_uses_neighbor", false);
  f.normalize_both = j.value("normalize_both", false);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{
      {"lr", c.lr},
      {"weight_decay", c.weight_decay},
      {"epochs", c.epochs},
      {"layers", c.layers},
      {"hidden", c.hidden},
      {"batch_size", c.batch_size},
      {"lambda", c.lambda},
      {"dropout", c.dropout},
      {"k_negatives", c.k_negatives},
      {"negative_dist", c.negative_dist == NegativeKind::degree ? "degree" : "uniform"},
      {"seed", c.seed},
      {"precision", c.precision},
      {"threads", c.threads},
      {"ablation", c.ablation}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.lr = j.value("lr", d.lr);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.epochs = j.value("epochs", d.epochs);
  c.layers = j.value("layers", d.layers);
  c.hidden = j.value("hidden", d.hidden);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lambda = j.value("lambda", d.lambda);
  c.dropout = j.value("dropout", d.dropout);
  c.k_negatives = j.value("k_negatives", d.k_negatives);
  c.negative_dist = j.value("negative_dist", std::string("uniform")) == "degree"
                        ? NegativeKind::degree
                        : NegativeKind::uniform;
  c.seed = j.value("seed", d.seed);
  c.precision = j.value("precision", d.precision);
  c.threads = j.value("threads", d.threads);
  if (j.contains("ablation")) c.ablation = j.at("ablation").get<AblationFlags>();
}

/// FNV-1a over the canonical JSON dump; stamped into checkpoints/reports.
inline std::string config_hash(const TrainConfig& c) {
  const std::string s = nlohmann::json(c).dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct EpochMetrics {
  std::size_t epoch = 0;
  double feat_loss = 0.0;
  double label_loss = 0.0;
  double total_loss = 0.0;
  double val_acc = 0.0;
  double seconds = 0.0;  // reported in report.json, not in the metrics CSV
};

struct RunReport {
  std::vector<EpochMetrics> epochs;
  std::size_t best_epoch = 0;
  double best_val_acc = 0.0;
  double test_acc = 0.0;
  std::string config_hash;
  nlohmann::json config;
  int threads = 1;
  std::string precision = "f32";

  nlohmann::json to_json() const {
    nlohmann::json eps = nlohmann::json::array();
    for (const auto& e : epochs)
      eps.push_back({{"epoch", e.epoch},
                     {"feat_loss", e.feat_loss},
                     {"label_loss", e.label_loss},
                     {"total_loss", e.total_loss},
                     {"val_acc", e.val_acc},
                     {"seconds", e.seconds}});
    return {{"epochs", eps},
            {"best_epoch", best_epoch},
            {"best_val_acc", best_val_acc},
            {"test_acc", test_acc},
            {"config_hash", config_hash},
            {"config", config},
            {"environment", {{"threads", threads}, {"precision", precision}}}};
  }
};

namespace detail {

/// Deterministic per-epoch batching: shuffle the edge list, split into
/// ceil(|E|/B) batches (last partial batch kept), sample K negatives per
/// edge excluding the endpoints and their neighbors.
inline std::vector<EdgeBatch> make_batches(const GraphDataset& g,
                                           const NegativeDistribution& dist,
                                           std::size_t batch_size, std::size_t k,
                                           Rng& rng) {
  std::vector<Edge> edges = g.edges();
  std::shuffle(edges.begin(), edges.end(), rng.engine());
  std::vector<EdgeBatch> batches;
  for (std::size_t start = 0; start < edges.size(); start += batch_size) {
    EdgeBatch b;
    const std::size_t end = std::min(start + batch_size, edges.size());
    b.edges.assign(edges.begin() + start, edges.begin() + end);
    for (const Edge& e : b.edges) {
      const auto exclude = edge_exclusion(g, e.first, e.second);
      b.negatives.push_back(sample_negatives(dist, k, exclude, rng));
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace detail

/// One pass over all edges; returns mean per-batch losses.
template <typename T>
EpochMetrics train_epoch(ModelParams<T>& params, const GraphDataset& g,
                         const std::unordered_set<NodeId>& train_set,
                         const TrainConfig& cfg, const NegativeDistribution& dist,
                         AdamState<T>& state, const Matrix<T>& features, Rng& rng) {
  if (g.num_edges() == 0) throw data_error("train_epoch: dataset has no edges");
  const auto batches = detail::make_batches(
      g, dist, cfg.batch_size, cfg.ablation.no_negative_samples ? 1 : cfg.k_negatives,
      rng);
  EpochMetrics m;
  for (const EdgeBatch& batch : batches) {
    auto graph = batch_loss(params, features, g.labels(), train_set, batch, cfg.lambda,
                            cfg.dropout, cfg.ablation, Mode::train, rng);
    graph.tape.backward(graph.total_id);
    const auto grads = graph.gradients();
    adam_step(params.trainable(), grads, state, cfg.lr, cfg.weight_decay);
    m.feat_loss += graph.values.feat;
    m.label_loss += graph.values.label;
    m.total_loss += graph.values.total;
  }
  const double nb = static_cast<double>(batches.size());
  m.feat_loss /= nb;
  m.label_loss /= nb;
  m.total_loss /= nb;
  return m;
}

template <typename T>
struct FitResult {
  ModelParams<T> best_params;
  RunReport report;
};

/// Full training run: E epochs of edge-batch SGD, per-epoch validation in
/// eval mode, best-validation checkpointing, test accuracy measured once on
/// the best checkpoint.
template <typename T>
FitResult<T> fit(const GraphDataset& g, const SplitMask& split, const TrainConfig& cfg,
                 const std::function<void(std::size_t, const ModelParams<T>&)>&
                     epoch_hook = nullptr) {
  cfg.validate();
  set_kernel_threads(cfg.threads);
  const Matrix<T> features = g.features().template cast<T>();
  ModelParams<T> params =
      init_params<T>(g.num_features(), cfg.hidden, cfg.layers, g.num_classes(), cfg.seed);
  AdamState<T> state = AdamState<T>::init(params.trainable());
  NegativeDistribution dist(cfg.negative_dist, g);
  std::unordered_set<NodeId> train_set(split.train.begin(), split.train.end());
  Rng rng(cfg.seed ^ 0xA5A5A5A5ull);

  FitResult<T> out;
  out.report.config = nlohmann::json(cfg);
  out.report.config_hash = config_hash(cfg);
  out.report.threads = cfg.threads;
  out.report.precision = cfg.precision;
  out.best_params = params;
  double best_val = -1.0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochMetrics m = train_epoch(params, g, train_set, cfg, dist, state, features, rng);
    m.epoch = epoch;
    m.val_acc = accuracy(params, features, g.labels(), split.val);
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (m.val_acc > best_val) {
      best_val = m.val_acc;
      out.best_params = params;
      out.report.best_epoch = epoch;
    }
    out.report.epochs.push_back(m);
    if (epoch_hook) epoch_hook(epoch, params);
  }
  out.report.best_val_acc = best_val;
  out.report.test_acc = accuracy(out.best_params, features, g.labels(), split.test);
  return out;
}

// ---------------------------------------------------------------------------
// Reference GCN trainer (full-batch CE, same optimizer protocol).

template <typename T>
struct GcnFitResult {
  GcnParams<T> best_params;
  RunReport report;
};

template <typename T>
GcnFitResult<T> train_gcn_reference(const GraphDataset& g, const SplitMask& split,
                                    const TrainConfig& cfg) {
  cfg.validate();
  set_kernel_threads(cfg.threads);
  const Matrix<T> features = g.features().template cast<T>();
  const auto adj = NormalizedAdjacency<T>::build(g);
  GcnParams<T> params =
      init_gcn_params<T>(g.num_features(), cfg.hidden, cfg.layers, g.num_classes(), cfg.seed);
  AdamState<T> state = AdamState<T>::init(params.trainable());

  auto eval_acc = [&](const GcnParams<T>& p, const std::vector<NodeId>& nodes) {
    const auto pred = gcn_predict(p, adj, features);
    std::size_t hits = 0;
    for (NodeId v : nodes)
      if (pred[v] == g.labels()[v]) ++hits;
    return nodes.empty() ? 0.0 : static_cast<double>(hits) / nodes.size();
  };

  GcnFitResult<T> out;
  out.report.config = nlohmann::json(cfg);
  out.report.config_hash = config_hash(cfg);
  out.report.threads = cfg.threads;
  out.report.precision = cfg.precision;
  out.best_params = params;
  double best_val = -1.0;

  std::vector<std::size_t> train_labels;
  for (NodeId v : split.train) train_labels.push_back(g.labels()[v]);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    GradTape<T> tape;
    auto model = TapedGcn<T>::attach(tape, params, adj);
    const ValueId x_id = tape.leaf(features);
    const ValueId logits = model.forward(x_id);
    const ValueId train_logits = tape.gather_rows(logits, split.train);
    const ValueId loss = tape.mean(tape.ce_rows(train_logits, train_labels));
    tape.backward(loss);
    adam_step(params.trainable(), model.gradients(), state, cfg.lr, cfg.weight_decay);

    EpochMetrics m;
    m.epoch = epoch;
    m.label_loss = m.total_loss = static_cast<double>(tape.value(loss)(0, 0));
    m.val_acc = eval_acc(params, split.val);
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (m.val_acc > best_val) {
      best_val = m.val_acc;
      out.best_params = params;
      out.report.best_epoch = epoch;
    }
    out.report.epochs.push_back(m);
  }
  out.report.best_val_acc = best_val;
  out.report.test_acc = eval_acc(out.best_params, split.test);
  return out;
}

// ---------------------------------------------------------------------------
// Grid search over (hidden F, batch size B, lambda).

struct GridCell {
  std::size_t hidden = 0;
  std::size_t batch_size = 0;
  double lambda = 0.0;
  double mean_val = 0.0, std_val = 0.0;
  double mean_test = 0.0, std_test = 0.0;
  std::vector<std::uint64_t> seeds;
};

struct GridResult {
  std::vector<GridCell> table;
  TrainConfig best;
};

inline GridResult grid_search(const GraphDataset& g, const SplitMask& split,
                              const TrainConfig& base,
                              const std::vector<std::size_t>& hidden_grid,
                              const std::vector<std::size_t>& batch_grid,
                              const std::vector<double>& lambda_grid,
                              const std::vector<std::uint64_t>& seeds) {
  if (hidden_grid.empty() || batch_grid.empty() || lambda_grid.empty() || seeds.empty())
    throw config_error("grid_search: empty grid");
  GridResult out;
  double best_val = -1.0;
  for (std::size_t f : hidden_grid)
    for (std::size_t b : batch_grid)
      for (double lam : lambda_grid) {
        GridCell cell;
        cell.hidden = f;
        cell.batch_size = b;
        cell.lambda = lam;
        cell.seeds = seeds;
        std::vector<double> vals, tests;
        for (std::uint64_t s : seeds) {
          TrainConfig cfg = base;
          cfg.hidden = f;
          cfg.batch_size = b;
          cfg.lambda = lam;
          cfg.seed = s;
          const auto res = fit<float>(g, split, cfg);
          vals.push_back(res.report.best_val_acc);
          tests.push_back(res.report.test_acc);
        }
        auto stats = [](const std::vector<double>& v) {
          double mean = 0.0;
          for (double x : v) mean += x;
          mean /= v.size();
          double var = 0.0;
          for (double x : v) var += (x - mean) * (x - mean);
          return std::pair<double, double>(mean, std::sqrt(var / v.size()));
        };
        std::tie(cell.mean_val, cell.std_val) = stats(vals);
        std::tie(cell.mean_test, cell.std_test) = stats(tests);
        if (cell.mean_val > best_val) {
          best_val = cell.mean_val;
          out.best = base;
          out.best.hidden = f;
          out.best.batch_size = b;
          out.best.lambda = lam;
        }
        out.table.push_back(cell);
      }
  return out;
}

}  // namespace gsdn
