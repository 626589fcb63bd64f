#pragma once

#include <queue>
#include <vector>

#include "gsdn/graph.hpp"
#include "gsdn/model.hpp"
#include "gsdn/tape.hpp"

namespace gsdn {

/// CSR form of A_hat = D^{-1/2} (A + I) D^{-1/2}: self-loops plus symmetric
/// normalization, entry (i,j) = 1/sqrt((d_i+1)(d_j+1)).
template <typename T>
struct NormalizedAdjacency {
  std::vector<std::size_t> row_ptr;
  std::vector<std::size_t> col_idx;
  std::vector<T> vals;

  static NormalizedAdjacency build(const GraphDataset& g) {
    const std::size_t n = g.num_nodes();
    NormalizedAdjacency a;
    a.row_ptr.resize(n + 1, 0);
    std::vector<std::size_t> deg(n);
    for (std::size_t i = 0; i < n; ++i) deg[i] = g.degree(i);
    for (std::size_t i = 0; i < n; ++i) a.row_ptr[i + 1] = a.row_ptr[i] + deg[i] + 1;
    a.col_idx.resize(a.row_ptr[n]);
    a.vals.resize(a.row_ptr[n]);
    for (std::size_t i = 0; i < n; ++i) {
      auto [lo, hi] = g.neighbors(i);
      std::size_t cursor = a.row_ptr[i];
      bool self_done = false;
      auto push = [&](std::size_t j) {
        a.col_idx[cursor] = j;
        a.vals[cursor] = T(1) / std::sqrt(T((deg[i] + 1) * (deg[j] + 1)));
        ++cursor;
      };
      for (const NodeId* p = lo; p != hi; ++p) {
        if (!self_done && *p > i) {
          push(i);
          self_done = true;
        }
        push(*p);
      }
      if (!self_done) push(i);
    }
    return a;
  }

  std::size_t num_rows() const { return row_ptr.size() - 1; }

  Matrix<T> multiply(const Matrix<T>& h) const {
    Matrix<T> out(num_rows(), h.cols);
    for (std::size_t i = 0; i < num_rows(); ++i) {
      T* orow = out.row_ptr(i);
      for (std::size_t e = row_ptr[i]; e < row_ptr[i + 1]; ++e) {
        const T w = vals[e];
        const T* src = h.row_ptr(col_idx[e]);
        for (std::size_t j = 0; j < h.cols; ++j) orow[j] += w * src[j];
      }
    }
    return out;
  }
};

/// Reference GCN: L graph-convolution layers, ReLU on all but the last,
/// then a dense classifier.
template <typename T>
struct GcnParams {
  std::size_t d = 0, hidden = 0, layers_n = 0, classes = 0;
  std::vector<Matrix<T>> w;  // layer weights: d x F, then F x F
  Matrix<T> wc, bc;          // classifier: F x C, 1 x C

  std::vector<Matrix<T>*> trainable() {
    std::vector<Matrix<T>*> out;
    for (auto& m : w) out.push_back(&m);
    out.push_back(&wc);
    out.push_back(&bc);
    return out;
  }
};

template <typename T>
GcnParams<T> init_gcn_params(std::size_t d, std::size_t hidden, std::size_t layers,
                             std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  GcnParams<T> p;
  p.d = d;
  p.hidden = hidden;
  p.layers_n = layers;
  p.classes = classes;
  for (std::size_t l = 0; l < layers; ++l)
    p.w.push_back(detail::glorot_uniform<T>(l == 0 ? d : hidden, hidden, rng));
  p.wc = detail::glorot_uniform<T>(hidden, classes, rng);
  p.bc = Matrix<T>(1, classes);
  return p;
}

template <typename T>
Matrix<T> gcn_forward(const GcnParams<T>& params, const NormalizedAdjacency<T>& a,
                      const Matrix<T>& x) {
  if (x.cols != params.d) throw dim_error("gcn_forward: input width != d");
  Matrix<T> h = x;
  for (std::size_t l = 0; l < params.w.size(); ++l) {
    h = matmul(a.multiply(h), params.w[l]);
    if (l + 1 < params.w.size()) h = relu(h);
  }
  Matrix<T> logits = matmul(h, params.wc);
  for (std::size_t i = 0; i < logits.rows; ++i)
    for (std::size_t j = 0; j < logits.cols; ++j) logits(i, j) += params.bc(0, j);
  return logits;
}

/// Taped forward for training (same graph as gcn_forward).
template <typename T>
struct TapedGcn {
  GradTape<T>* tape = nullptr;
  const NormalizedAdjacency<T>* adj = nullptr;
  std::vector<ValueId> w;
  ValueId wc, bc;

  static TapedGcn attach(GradTape<T>& tape, GcnParams<T>& p,
                         const NormalizedAdjacency<T>& adj) {
    TapedGcn m;
    m.tape = &tape;
    m.adj = &adj;
    for (auto& mat : p.w) m.w.push_back(tape.leaf(mat));
    m.wc = tape.leaf(p.wc);
    m.bc = tape.leaf(p.bc);
    return m;
  }

  ValueId forward(ValueId x) {
    ValueId h = x;
    for (std::size_t l = 0; l < w.size(); ++l) {
      h = tape->matmul(tape->spmm_symmetric(adj->row_ptr, adj->col_idx, adj->vals, h),
                       w[l]);
      if (l + 1 < w.size()) h = tape->relu(h);
    }
    return tape->add_row_broadcast(tape->matmul(h, wc), bc);
  }

  std::vector<Matrix<T>> gradients() const {
    std::vector<Matrix<T>> out;
    for (ValueId id : w) out.push_back(tape->grad_or_zero(id));
    out.push_back(tape->grad_or_zero(wc));
    out.push_back(tape->grad_or_zero(bc));
    return out;
  }
};

template <typename T>
std::vector<std::size_t> gcn_predict(const GcnParams<T>& params,
                                     const NormalizedAdjacency<T>& a,
                                     const Matrix<T>& x) {
  const Matrix<T> y = gcn_forward(params, a, x);
  std::vector<std::size_t> out(y.rows);
  for (std::size_t i = 0; i < y.rows; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < y.cols; ++j)
      if (y(i, j) > y(i, best)) best = j;
    out[i] = best;
  }
  return out;
}

/// Nodes an L-layer message-passing model must fetch to infer one target.
struct FetchTrace {
  NodeId target = 0;
  std::size_t depth = 0;
  std::vector<std::size_t> per_layer;  // cumulative unique count at depth 0..L
  std::size_t total_unique = 0;
};

/// BFS to depth L from target; per_layer[l] counts unique nodes within l
/// hops (including the target). The GSDN inference path fetches 1 node at
/// any depth; pass gsdn_path = true for that trace.
inline FetchTrace count_fetches(const GraphDataset& g, NodeId target, std::size_t depth,
                                bool gsdn_path = false) {
  if (target >= g.num_nodes()) throw data_error("count_fetches: invalid node id");
  FetchTrace tr;
  tr.target = target;
  tr.depth = depth;
  if (gsdn_path) {
    tr.per_layer.assign(depth + 1, 1);
    tr.total_unique = 1;
    return tr;
  }
  std::vector<int> dist(g.num_nodes(), -1);
  dist[target] = 0;
  std::queue<NodeId> q;
  q.push(target);
  std::vector<std::size_t> found_at(depth + 1, 0);
  found_at[0] = 1;
  while (!q.empty()) {
    const NodeId u = q.front();
    q.pop();
    if (static_cast<std::size_t>(dist[u]) == depth) continue;
    auto [lo, hi] = g.neighbors(u);
    for (const NodeId* p = lo; p != hi; ++p) {
      if (dist[*p] < 0) {
        dist[*p] = dist[u] + 1;
        found_at[dist[*p]] += 1;
        q.push(*p);
      }
    }
  }
  std::size_t cum = 0;
  for (std::size_t l = 0; l <= depth; ++l) {
    cum += found_at[l];
    tr.per_layer.push_back(cum);
  }
  tr.total_unique = cum;
  return tr;
}

}  // namespace gsdn
