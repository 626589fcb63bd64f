#pragma once

#include <atomic>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gsdn/matrix.hpp"

namespace gsdn {

struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using NodeId = std::size_t;
using Edge = std::pair<NodeId, NodeId>;  // canonical i < j

/// Train/val/test node-id sets. Pairwise disjoint by construction.
struct SplitMask {
  std::vector<NodeId> train;
  std::vector<NodeId> val;
  std::vector<NodeId> test;
};

/// Immutable graph with node features, undirected deduplicated edges,
/// labels, and CSR adjacency. Adjacency reads go through neighbors() /
/// degree(), which bump a counter so tests can assert that the MLP
/// inference path never touches graph structure.
class GraphDataset {
 public:
  GraphDataset(Matrix<float> features, std::vector<Edge> edges,
               std::vector<std::size_t> labels, std::size_t num_classes)
      : features_(std::move(features)),
        labels_(std::move(labels)),
        num_classes_(num_classes) {
    const std::size_t n = features_.rows;
    if (labels_.size() != n) throw data_error("labels/features row mismatch");
    for (std::size_t l : labels_)
      if (l >= num_classes_) throw data_error("label >= num_classes");
    std::set<Edge> canon;
    for (auto [a, b] : edges) {
      if (a == b) throw data_error("self-loop edge");
      if (a >= n || b >= n) throw data_error("edge endpoint out of range");
      canon.insert({std::min(a, b), std::max(a, b)});
    }
    edges_.assign(canon.begin(), canon.end());
    // CSR over both directions
    std::vector<std::size_t> deg(n, 0);
    for (auto [a, b] : edges_) {
      ++deg[a];
      ++deg[b];
    }
    adj_ptr_.resize(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) adj_ptr_[i + 1] = adj_ptr_[i] + deg[i];
    adj_idx_.resize(adj_ptr_[n]);
    std::vector<std::size_t> cursor(adj_ptr_.begin(), adj_ptr_.end() - 1);
    for (auto [a, b] : edges_) {
      adj_idx_[cursor[a]++] = b;
      adj_idx_[cursor[b]++] = a;
    }
    for (std::size_t i = 0; i < n; ++i)
      std::sort(adj_idx_.begin() + adj_ptr_[i], adj_idx_.begin() + adj_ptr_[i + 1]);
  }

  // the access counter is per-instance state, not graph data
  GraphDataset(const GraphDataset& o)
      : features_(o.features_),
        edges_(o.edges_),
        labels_(o.labels_),
        num_classes_(o.num_classes_),
        adj_ptr_(o.adj_ptr_),
        adj_idx_(o.adj_idx_) {}

  GraphDataset(GraphDataset&& o) noexcept
      : features_(std::move(o.features_)),
        edges_(std::move(o.edges_)),
        labels_(std::move(o.labels_)),
        num_classes_(o.num_classes_),
        adj_ptr_(std::move(o.adj_ptr_)),
        adj_idx_(std::move(o.adj_idx_)) {}

  GraphDataset& operator=(const GraphDataset&) = delete;
  GraphDataset& operator=(GraphDataset&&) = delete;

  std::size_t num_nodes() const { return features_.rows; }
  std::size_t num_features() const { return features_.cols; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t num_edges() const { return edges_.size(); }

  const Matrix<float>& features() const { return features_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::size_t>& labels() const { return labels_; }

  /// Counted adjacency access.
  std::pair<const NodeId*, const NodeId*> neighbors(NodeId i) const {
    adjacency_reads_.fetch_add(1, std::memory_order_relaxed);
    return {adj_idx_.data() + adj_ptr_[i], adj_idx_.data() + adj_ptr_[i + 1]};
  }

  std::size_t degree(NodeId i) const {
    adjacency_reads_.fetch_add(1, std::memory_order_relaxed);
    return adj_ptr_[i + 1] - adj_ptr_[i];
  }

  bool has_edge(NodeId a, NodeId b) const {
    auto [lo, hi] = neighbors(a);
    return std::binary_search(lo, hi, b);
  }

  std::uint64_t adjacency_reads() const {
    return adjacency_reads_.load(std::memory_order_relaxed);
  }

  /// Replace labels (noise injection works on a copy of the label vector).
  GraphDataset with_labels(std::vector<std::size_t> labels) const {
    return GraphDataset(features_, edges_, std::move(labels), num_classes_);
  }

 private:
  Matrix<float> features_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> labels_;
  std::size_t num_classes_;
  std::vector<std::size_t> adj_ptr_;
  std::vector<NodeId> adj_idx_;
  mutable std::atomic<std::uint64_t> adjacency_reads_{0};
};

enum class NegativeKind { uniform, degree };

/// Node distribution for negative sampling: uniform or degree-proportional.
/// Stores a cumulative table for inverse-CDF draws.
class NegativeDistribution {
 public:
  NegativeDistribution(NegativeKind kind, const GraphDataset& g) : kind_(kind) {
    const std::size_t n = g.num_nodes();
    std::vector<double> w(n, 1.0);
    if (kind == NegativeKind::degree) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        w[i] = static_cast<double>(g.degree(i));
        total += w[i];
      }
      if (total == 0.0) throw data_error("degree distribution on edgeless graph");
    }
    cumulative_.resize(n);
    double acc = 0.0, total = std::accumulate(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      acc += w[i] / total;
      cumulative_[i] = acc;
    }
    cumulative_.back() = 1.0;
  }

  NegativeKind kind() const { return kind_; }
  std::size_t num_nodes() const { return cumulative_.size(); }

  double prob(NodeId i) const {
    return cumulative_[i] - (i == 0 ? 0.0 : cumulative_[i - 1]);
  }

  NodeId draw(Rng& rng) const {
    const double u = rng.uniform();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    return static_cast<NodeId>(it - cumulative_.begin());
  }

 private:
  NegativeKind kind_;
  std::vector<double> cumulative_;
};

struct sampling_exhausted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Draw k node ids i.i.d. from dist, rejecting members of exclude.
/// exclude is the contrastive edge's endpoints plus their neighbors.
inline std::vector<NodeId> sample_negatives(const NegativeDistribution& dist,
                                            std::size_t k,
                                            const std::unordered_set<NodeId>& exclude,
                                            Rng& rng, std::size_t retry_cap = 10000) {
  if (k < 1) throw config_error("sample_negatives: k must be >= 1");
  if (exclude.size() >= dist.num_nodes())
    throw sampling_exhausted("exclusion set covers every node");
  std::vector<NodeId> out;
  out.reserve(k);
  std::size_t attempts = 0;
  while (out.size() < k) {
    const NodeId v = dist.draw(rng);
    if (!exclude.count(v)) {
      out.push_back(v);
    } else if (++attempts > retry_cap) {
      throw sampling_exhausted("negative sampling retry cap exceeded");
    }
  }
  return out;
}

/// Exclusion set for an edge: both endpoints and the union of their
/// neighborhoods, so samples are genuine non-neighbors of either endpoint.
inline std::unordered_set<NodeId> edge_exclusion(const GraphDataset& g, NodeId i,
                                                 NodeId j) {
  std::unordered_set<NodeId> ex{i, j};
  for (NodeId u : {i, j}) {
    auto [lo, hi] = g.neighbors(u);
    ex.insert(lo, hi);
  }
  return ex;
}

/// Asymmetric label noise: each train label c flips to (c+1) % C with
/// probability r; nodes outside the train mask are untouched.
inline std::vector<std::size_t> inject_label_noise(const std::vector<std::size_t>& labels,
                                                   const std::vector<NodeId>& train_mask,
                                                   double r, std::size_t num_classes,
                                                   std::uint64_t seed) {
  if (r < 0.0 || r > 1.0) throw config_error("noise rate must be in [0,1]");
  std::vector<std::size_t> out = labels;
  Rng rng(seed);
  for (NodeId v : train_mask)
    if (rng.uniform() < r) out[v] = (out[v] + 1) % num_classes;
  return out;
}

/// Keep exactly k_per_class train nodes per class, drawn uniformly from the
/// current train set; val/test unchanged.
inline SplitMask subsample_labels(const SplitMask& split,
                                  const std::vector<std::size_t>& labels,
                                  std::size_t k_per_class, std::size_t num_classes,
                                  std::uint64_t seed) {
  std::vector<std::vector<NodeId>> by_class(num_classes);
  for (NodeId v : split.train) by_class[labels[v]].push_back(v);
  Rng rng(seed);
  SplitMask out;
  out.val = split.val;
  out.test = split.test;
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& pool = by_class[c];
    if (pool.size() < k_per_class)
      throw data_error("class " + std::to_string(c) + " has fewer than k train nodes");
    std::shuffle(pool.begin(), pool.end(), rng.engine());
    out.train.insert(out.train.end(), pool.begin(), pool.begin() + k_per_class);
  }
  std::sort(out.train.begin(), out.train.end());
  return out;
}

/// Fraction of edges whose endpoints share a label.
inline double edge_homophily(const GraphDataset& g) {
  if (g.num_edges() == 0) return 0.0;
  std::size_t same = 0;
  for (auto [a, b] : g.edges())
    if (g.labels()[a] == g.labels()[b]) ++same;
  return static_cast<double>(same) / static_cast<double>(g.num_edges());
}

/// Planted-partition generator: n_per_class nodes per class, intra-class
/// edge probability p_in, inter-class p_out. Features are an orthogonal
/// class-mean vector scaled by `signal` plus unit Gaussian noise. Splits
/// follow the 20-per-class train / 500 val / rest test convention (capped
/// on small graphs).
inline std::pair<GraphDataset, SplitMask> generate_planted(
    std::size_t n_per_class, std::size_t num_classes, double p_in, double p_out,
    std::size_t dim, double signal, std::uint64_t seed,
    std::size_t train_per_class = 20, std::size_t val_count = 500) {
  if (!(0.0 <= p_out && p_out < p_in && p_in <= 1.0))
    throw config_error("require 0 <= p_out < p_in <= 1");
  if (signal < 0.0) throw config_error("signal must be >= 0");
  if (dim < num_classes) throw config_error("feature dim must be >= num classes");
  const std::size_t n = n_per_class * num_classes;
  Rng rng(seed);

  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i / n_per_class;

  // orthogonal class means: scaled coordinate axes
  Matrix<float> x(n, dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dim; ++j) {
      const double mean = (j == labels[i]) ? signal : 0.0;
      x(i, j) = static_cast<float>(mean + rng.normal());
    }

  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = labels[i] == labels[j] ? p_in : p_out;
      if (rng.uniform() < p) edges.push_back({i, j});
    }

  GraphDataset g(std::move(x), std::move(edges), std::move(labels), num_classes);

  SplitMask split;
  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::vector<std::size_t> taken(num_classes, 0);
  std::vector<NodeId> rest;
  const std::size_t tpc = std::min(train_per_class, n_per_class);
  for (NodeId v : order) {
    const std::size_t c = g.labels()[v];
    if (taken[c] < tpc) {
      split.train.push_back(v);
      ++taken[c];
    } else {
      rest.push_back(v);
    }
  }
  const std::size_t nval = std::min(val_count, rest.size() / 2);
  split.val.assign(rest.begin(), rest.begin() + nval);
  split.test.assign(rest.begin() + nval, rest.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return {std::move(g), std::move(split)};
}

}  // namespace gsdn
