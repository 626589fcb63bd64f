#pragma once

#include <map>
#include <string>
#include <vector>

#include "gsdn/training.hpp"

namespace gsdn {

/// Nodes at shortest-path distance exactly `hop` (1 or 2) from i.
inline std::vector<NodeId> hop_neighborhood(const GraphDataset& g, NodeId i,
                                            std::size_t hop) {
  auto [lo, hi] = g.neighbors(i);
  if (hop == 1) return {lo, hi};
  std::set<NodeId> one(lo, hi);
  std::set<NodeId> two;
  for (NodeId j : one) {
    auto [l2, h2] = g.neighbors(j);
    for (const NodeId* p = l2; p != h2; ++p)
      if (*p != i && !one.count(*p)) two.insert(*p);
  }
  return {two.begin(), two.end()};
}

/// Mean over nodes of mean cosine similarity between a node's embedding and
/// its hop-neighborhood embeddings. Hopless nodes and zero-norm pairs are
/// skipped.
inline double cosine_similarity_probe(const Matrix<float>& embeddings,
                                      const GraphDataset& g, std::size_t hop) {
  if (hop != 1 && hop != 2) throw config_error("hop must be 1 or 2");
  double acc = 0.0;
  std::size_t used = 0;
  std::vector<double> norms(embeddings.rows);
  for (std::size_t i = 0; i < embeddings.rows; ++i) {
    double n = 0.0;
    for (std::size_t j = 0; j < embeddings.cols; ++j)
      n += static_cast<double>(embeddings(i, j)) * embeddings(i, j);
    norms[i] = std::sqrt(n);
  }
  for (NodeId i = 0; i < g.num_nodes(); ++i) {
    const auto nbrs = hop_neighborhood(g, i, hop);
    if (nbrs.empty() || norms[i] == 0.0) continue;
    double sum = 0.0;
    std::size_t pairs = 0;
    for (NodeId j : nbrs) {
      if (norms[j] == 0.0) continue;
      double dot = 0.0;
      for (std::size_t k = 0; k < embeddings.cols; ++k)
        dot += static_cast<double>(embeddings(i, k)) * embeddings(j, k);
      sum += dot / (norms[i] * norms[j]);
      ++pairs;
    }
    if (pairs == 0) continue;
    acc += sum / pairs;
    ++used;
  }
  return used ? acc / used : 0.0;
}

template <typename T>
double cosine_similarity_probe(const ModelParams<T>& params, const GraphDataset& g,
                               std::size_t hop) {
  const Matrix<float> h =
      backbone_forward_eval(params, g.features().template cast<T>()).template cast<float>();
  return cosine_similarity_probe(h, g, hop);
}

/// Per-epoch mean cosine similarity with 1-hop and 2-hop neighbors.
struct SimilarityCurve {
  std::vector<std::size_t> epochs;
  std::vector<double> hop1;
  std::vector<double> hop2;
};

/// Fit with a similarity probe every `interval` epochs (and at the last).
inline std::pair<FitResult<float>, SimilarityCurve> fit_with_similarity(
    const GraphDataset& g, const SplitMask& split, const TrainConfig& cfg,
    std::size_t interval) {
  SimilarityCurve curve;
  auto hook = [&](std::size_t epoch, const ModelParams<float>& p) {
    if (epoch % interval != 0 && epoch != 1 && epoch != cfg.epochs) return;
    curve.epochs.push_back(epoch);
    curve.hop1.push_back(cosine_similarity_probe(p, g, 1));
    curve.hop2.push_back(cosine_similarity_probe(p, g, 2));
  };
  auto res = fit<float>(g, split, cfg, hook);
  return {std::move(res), std::move(curve)};
}

/// A generic sweep table: one row per (cell, seed) plus per-cell summary.
struct SweepRow {
  std::string model;
  double x = 0.0;  // sweep coordinate (noise ratio, k, ...)
  std::uint64_t seed = 0;
  double test_acc = 0.0;
};

struct SweepTable {
  std::string experiment;
  std::vector<SweepRow> rows;

  double mean(const std::string& model, double x) const {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows)
      if (r.model == model && r.x == x) {
        acc += r.test_acc;
        ++n;
      }
    return n ? acc / n : 0.0;
  }

  double stddev(const std::string& model, double x) const {
    const double m = mean(model, x);
    double var = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows)
      if (r.model == model && r.x == x) {
        var += (r.test_acc - m) * (r.test_acc - m);
        ++n;
      }
    return n ? std::sqrt(var / n) : 0.0;
  }
};

/// Train one model family on a (possibly label-noised / subsampled) dataset.
inline double run_model(const std::string& model, const GraphDataset& g,
                        const SplitMask& split, TrainConfig cfg) {
  if (model == "gsdn") {
    return fit<float>(g, split, cfg).report.test_acc;
  }
  if (model == "mlp") {
    return fit<float>(g, split, cfg.mlp_mode()).report.test_acc;
  }
  if (model == "gcn") {
    return train_gcn_reference<float>(g, split, cfg).report.test_acc;
  }
  throw config_error("unknown model: " + model);
}

/// Accuracy vs asymmetric-label-noise ratio, per model and seed.
inline SweepTable run_noise_sweep(const GraphDataset& g, const SplitMask& split,
                                  const TrainConfig& base, const std::vector<double>& ratios,
                                  const std::vector<std::string>& models,
                                  const std::vector<std::uint64_t>& seeds) {
  SweepTable t;
  t.experiment = "noise";
  for (double r : ratios) {
    if (r < 0.0 || r > 1.0) throw config_error("noise ratio out of [0,1]");
    for (std::uint64_t seed : seeds) {
      const auto noisy = g.with_labels(
          inject_label_noise(g.labels(), split.train, r, g.num_classes(), seed * 7919 + 13));
      for (const auto& model : models) {
        TrainConfig cfg = base;
        cfg.seed = seed;
        t.rows.push_back({model, r, seed, run_model(model, noisy, split, cfg)});
      }
    }
  }
  return t;
}

/// Accuracy vs labeled-samples-per-class, per model and seed.
inline SweepTable run_label_scarcity_sweep(const GraphDataset& g, const SplitMask& split,
                                           const TrainConfig& base,
                                           const std::vector<std::size_t>& k_values,
                                           const std::vector<std::string>& models,
                                           const std::vector<std::uint64_t>& seeds) {
  SweepTable t;
  t.experiment = "scarcity";
  for (std::size_t k : k_values) {
    for (std::uint64_t seed : seeds) {
      const SplitMask sub =
          subsample_labels(split, g.labels(), k, g.num_classes(), seed * 104729 + 7);
      for (const auto& model : models) {
        TrainConfig cfg = base;
        cfg.seed = seed;
        t.rows.push_back({model, static_cast<double>(k), seed,
                          run_model(model, g, sub, cfg)});
      }
    }
  }
  return t;
}

/// The five ablation variants: full model, w/o negative samples, w/o
/// learnable mixup (beta fixed at 0.5), w/o label distillation, and
/// degree-prior negatives in place of uniform.
inline SweepTable run_ablations(const GraphDataset& g, const SplitMask& split,
                                const TrainConfig& base,
                                const std::vector<std::uint64_t>& seeds) {
  SweepTable t;
  t.experiment = "ablation";
  const std::vector<std::pair<std::string, std::function<TrainConfig(TrainConfig)>>>
      variants = {
          {"full", [](TrainConfig c) { return c; }},
          {"wo_ns",
           [](TrainConfig c) {
             c.ablation.no_negative_samples = true;
             return c;
           }},
          {"wo_augment",
           [](TrainConfig c) {
             c.ablation.no_mixup = true;
             return c;
           }},
          {"wo_ld",
           [](TrainConfig c) {
             c.ablation.no_label_distill = true;
             return c;
           }},
          {"degree_prior",
           [](TrainConfig c) {
             c.negative_dist = NegativeKind::degree;
             return c;
           }},
      };
  for (const auto& [name, mutate] : variants) {
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = mutate(base);
      cfg.seed = seed;
      t.rows.push_back({name, 0.0, seed, fit<float>(g, split, cfg).report.test_acc});
    }
  }
  return t;
}

}  // namespace gsdn
