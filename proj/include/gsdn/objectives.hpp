#pragma once

#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gsdn/graph.hpp"
#include "gsdn/model.hpp"
#include "gsdn/tape.hpp"

namespace gsdn {

/// Loss-graph switches for the ablation study. Each flag removes one
/// component independently of the others.
struct AblationFlags {
  bool no_negative_samples = false;
  bool no_mixup = false;        // interpolation kept, learnability removed
  bool no_label_distill = false;  // neighbor CE terms dropped, plain CE kept
  bool mixup_off_uses_neighbor = false;  // alternative reading: z' = g(h_j)
  bool normalize_both = false;  // sensitivity flag: positives also on softmax
};

/// A sampled mini-batch of edges with per-edge negative node ids.
struct EdgeBatch {
  std::vector<Edge> edges;
  std::vector<std::vector<NodeId>> negatives;  // one list of K ids per edge

  std::vector<NodeId> batch_nodes() const {
    std::set<NodeId> s;
    for (auto [a, b] : edges) {
      s.insert(a);
      s.insert(b);
    }
    return {s.begin(), s.end()};
  }
};

struct LossBreakdown {
  double feat = 0.0;
  double label = 0.0;
  double total = 0.0;
  double lambda = 0.0;
};

inline LossBreakdown total_loss(double feat, double label, double lambda) {
  if (lambda < 0.0) throw config_error("lambda must be >= 0");
  return LossBreakdown{feat, label, label + lambda * feat, lambda};
}

// ---------------------------------------------------------------------------
// Full-graph losses. Exact but quadratic in N; these are the reference
// implementations the batched estimators are tested against.

/// Feature-level self-distillation over the whole graph: per node, mean
/// squared distance to mixup-augmented neighbor predictions (raw logits)
/// minus mean squared distance to every non-neighbor (softmax outputs).
/// Isolated nodes are skipped from the outer average.
template <typename T>
double feat_loss_full(const ModelParams<T>& params, const GraphDataset& g,
                      bool normalize_both = false, bool no_mixup = false) {
  const std::size_t n = g.num_nodes();
  const Matrix<T> x = g.features().template cast<T>();
  const Matrix<T> h = backbone_forward_eval(params, x);
  const Matrix<T> y = head_f(params, h);
  const Matrix<T> z = head_g(params, h);
  const Matrix<T> ys = row_softmax(y);
  const Matrix<T> zs = row_softmax(z);
  const std::size_t c = params.classes;

  double acc = 0.0;
  std::size_t used = 0;
  for (NodeId i = 0; i < n; ++i) {
    auto [lo, hi] = g.neighbors(i);
    const std::size_t deg = hi - lo;
    if (deg == 0) continue;  // 1/|N_i| undefined; node skipped
    double pos = 0.0;
    for (const NodeId* pj = lo; pj != hi; ++pj) {
      const NodeId j = *pj;
      const T beta = no_mixup ? T(0.5) : mixup_coeff(params, x.row_ptr(i), x.row_ptr(j));
      const std::vector<T> zp = mixup_embed(params, h.row_ptr(i), h.row_ptr(j), beta);
      if (normalize_both) {
        Matrix<T> zrow(1, c);
        std::copy(zp.begin(), zp.end(), zrow.data.begin());
        const Matrix<T> zps = row_softmax(zrow);
        pos += static_cast<double>(sq_l2(ys.row_ptr(i), zps.row_ptr(0), c));
      } else {
        pos += static_cast<double>(sq_l2(y.row_ptr(i), zp.data(), c));
      }
    }
    pos /= static_cast<double>(deg);

    double neg = 0.0;
    std::size_t m = 0;
    for (NodeId k = 0; k < n; ++k) {
      if (k == i) continue;
      if (std::binary_search(lo, hi, k)) continue;
      neg += static_cast<double>(sq_l2(ys.row_ptr(i), zs.row_ptr(k), c));
      ++m;
    }
    if (m > 0) neg /= static_cast<double>(m);
    acc += pos - neg;
    ++used;
  }
  return used ? acc / static_cast<double>(used) : 0.0;
}

/// Label-level self-distillation over the whole labeled set: a node's own
/// f-head cross-entropy plus its neighbors' g-head cross-entropy against
/// the node's label (a sum, as defined).
template <typename T>
double label_loss_full(const ModelParams<T>& params, const GraphDataset& g,
                       const SplitMask& split) {
  if (split.train.empty()) throw data_error("label_loss_full: empty train split");
  const Matrix<T> x = g.features().template cast<T>();
  const Matrix<T> h = backbone_forward_eval(params, x);
  const Matrix<T> y = head_f(params, h);
  const Matrix<T> z = head_g(params, h);
  double acc = 0.0;
  for (NodeId i : split.train) {
    const std::size_t s = g.labels()[i];
    acc += static_cast<double>(cross_entropy(y.row_ptr(i), params.classes, s));
    auto [lo, hi] = g.neighbors(i);
    for (const NodeId* pj = lo; pj != hi; ++pj)
      acc += static_cast<double>(cross_entropy(z.row_ptr(*pj), params.classes, s));
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Batched losses on the tape. One call builds the whole per-batch loss
// graph: union forward, both loss terms, and the weighted total.

template <typename T>
struct BatchLossGraph {
  GradTape<T> tape;
  TapedModel<T> model;
  ValueId feat_id, label_id, total_id;
  LossBreakdown values;

  std::vector<Matrix<T>> gradients() const { return model.gradients(); }
};

namespace detail {

template <typename T>
ValueId constant_scalar(GradTape<T>& tape, T v) {
  return tape.leaf(Matrix<T>(1, 1, v));
}

}  // namespace detail

/// Build L_total = L_label + lambda * L_feat for one edge batch.
///
/// The backbone runs once over the union of batch endpoints and negatives;
/// batchnorm statistics are taken over that union. Positives compare raw
/// logits against mixup-augmented g-head outputs; negatives compare softmax
/// outputs, per-edge expectation estimated with K sampled non-neighbors.
template <typename T>
BatchLossGraph<T> batch_loss(ModelParams<T>& params, const Matrix<T>& features,
                             const std::vector<std::size_t>& labels,
                             const std::unordered_set<NodeId>& train_set,
                             const EdgeBatch& batch, double lambda, double dropout_p,
                             const AblationFlags& flags, Mode mode, Rng& rng) {
  if (batch.edges.empty()) throw data_error("batch_loss: empty batch");
  BatchLossGraph<T> out;
  out.model = TapedModel<T>::attach(out.tape, params);
  GradTape<T>& tape = out.tape;
  TapedModel<T>& model = out.model;

  // union of touched nodes -> local row indices
  std::vector<NodeId> uni;
  {
    std::set<NodeId> s;
    for (std::size_t e = 0; e < batch.edges.size(); ++e) {
      s.insert(batch.edges[e].first);
      s.insert(batch.edges[e].second);
      for (NodeId v : batch.negatives.empty() ? std::vector<NodeId>{} : batch.negatives[e])
        s.insert(v);
    }
    uni.assign(s.begin(), s.end());
  }
  std::unordered_map<NodeId, std::size_t> local;
  for (std::size_t i = 0; i < uni.size(); ++i) local[uni[i]] = i;

  Matrix<T> xu(uni.size(), features.cols);
  for (std::size_t i = 0; i < uni.size(); ++i)
    std::copy_n(features.row_ptr(uni[i]), features.cols, xu.row_ptr(i));
  const ValueId x_id = tape.leaf(std::move(xu));

  const ValueId h_id = model.backbone(x_id, mode, dropout_p, rng);
  const ValueId y_id = model.apply_head_f(h_id);
  const ValueId z_id = model.apply_head_g(h_id);

  const std::size_t ne = batch.edges.size();
  std::vector<std::size_t> li(ne), lj(ne);
  for (std::size_t e = 0; e < ne; ++e) {
    li[e] = local.at(batch.edges[e].first);
    lj[e] = local.at(batch.edges[e].second);
  }

  // ---- feature-level term
  if (lambda > 0.0) {
    const ValueId hi = tape.gather_rows(h_id, li);
    const ValueId hj = tape.gather_rows(h_id, lj);
    const ValueId yi = tape.gather_rows(y_id, li);
    const ValueId yj = tape.gather_rows(y_id, lj);

    ValueId beta_ij, beta_ji;
    if (flags.no_mixup) {
      beta_ij = tape.leaf(Matrix<T>(ne, 1, flags.mixup_off_uses_neighbor ? T(1) : T(0.5)));
      beta_ji = beta_ij;
    } else {
      const ValueId proj = tape.matmul(x_id, model.wm);
      const ValueId pi = tape.gather_rows(proj, li);
      const ValueId pj = tape.gather_rows(proj, lj);
      beta_ij = tape.sigmoid(tape.matvec(tape.concat_cols(pi, pj), model.attn));
      beta_ji = tape.sigmoid(tape.matvec(tape.concat_cols(pj, pi), model.attn));
    }
    const ValueId zp_ij = model.apply_head_g(tape.row_mix(hi, hj, beta_ij));
    const ValueId zp_ji = model.apply_head_g(tape.row_mix(hj, hi, beta_ji));

    ValueId pos;
    if (flags.normalize_both) {
      pos = tape.add(
          tape.rowwise_sqdist(tape.row_softmax(yi), tape.row_softmax(zp_ij)),
          tape.rowwise_sqdist(tape.row_softmax(yj), tape.row_softmax(zp_ji)));
    } else {
      pos = tape.add(tape.rowwise_sqdist(yi, zp_ij), tape.rowwise_sqdist(yj, zp_ji));
    }

    ValueId per_edge = pos;
    if (!flags.no_negative_samples && !batch.negatives.empty()) {
      const ValueId ysm = tape.row_softmax(y_id);
      const ValueId zsm = tape.row_softmax(z_id);
      const ValueId ysi = tape.gather_rows(ysm, li);
      const ValueId ysj = tape.gather_rows(ysm, lj);
      const std::size_t k = batch.negatives.front().size();
      ValueId neg_sum;
      for (std::size_t t = 0; t < k; ++t) {
        std::vector<std::size_t> lk(ne);
        for (std::size_t e = 0; e < ne; ++e) lk[e] = local.at(batch.negatives[e][t]);
        const ValueId zn = tape.gather_rows(zsm, lk);
        const ValueId term =
            tape.add(tape.rowwise_sqdist(ysi, zn), tape.rowwise_sqdist(ysj, zn));
        neg_sum = t == 0 ? term : tape.add(neg_sum, term);
      }
      per_edge = tape.sub(pos, tape.scale(neg_sum, T(1) / T(k)));
    }
    out.feat_id = tape.mean(per_edge);
  } else {
    out.feat_id = detail::constant_scalar(tape, T(0));
  }

  // ---- label-level term: mean over labeled batch nodes of own CE plus
  //      (unless ablated) the batch-edge neighbors' g-head CE.
  {
    std::vector<std::size_t> own_rows, nb_rows;
    std::vector<std::size_t> own_labels, nb_labels;
    std::unordered_set<NodeId> labeled_in_batch;
    for (std::size_t e = 0; e < ne; ++e) {
      const auto [a, b] = batch.edges[e];
      if (train_set.count(a)) {
        labeled_in_batch.insert(a);
        nb_rows.push_back(lj[e]);
        nb_labels.push_back(labels[a]);
      }
      if (train_set.count(b)) {
        labeled_in_batch.insert(b);
        nb_rows.push_back(li[e]);
        nb_labels.push_back(labels[b]);
      }
    }
    for (NodeId v : labeled_in_batch) {
      own_rows.push_back(local.at(v));
      own_labels.push_back(labels[v]);
    }
    if (labeled_in_batch.empty()) {
      out.label_id = detail::constant_scalar(tape, T(0));
    } else {
      ValueId total = tape.sum(tape.ce_rows(tape.gather_rows(y_id, own_rows), own_labels));
      if (!flags.no_label_distill && !nb_rows.empty()) {
        total = tape.add(
            total, tape.sum(tape.ce_rows(tape.gather_rows(z_id, nb_rows), nb_labels)));
      }
      out.label_id = tape.scale(total, T(1) / T(labeled_in_batch.size()));
    }
  }

  out.total_id = tape.add(out.label_id, tape.scale(out.feat_id, T(lambda)));
  out.values = total_loss(static_cast<double>(tape.value(out.feat_id)(0, 0)),
                          static_cast<double>(tape.value(out.label_id)(0, 0)), lambda);
  return out;
}

/// Convenience wrappers matching the per-operation contracts.
template <typename T>
double feat_loss_batch(ModelParams<T>& params, const Matrix<T>& features,
                       const EdgeBatch& batch, const AblationFlags& flags = {},
                       Mode mode = Mode::eval) {
  Rng rng(0);
  std::vector<std::size_t> no_labels(features.rows, 0);
  auto g = batch_loss(params, features, no_labels, {}, batch, /*lambda=*/1.0,
                      /*dropout_p=*/0.0, flags, mode, rng);
  return g.values.feat;
}

template <typename T>
double label_loss_batch(ModelParams<T>& params, const Matrix<T>& features,
                        const std::vector<std::size_t>& labels,
                        const std::unordered_set<NodeId>& train_set,
                        const EdgeBatch& batch, const AblationFlags& flags = {},
                        Mode mode = Mode::eval) {
  Rng rng(0);
  auto g = batch_loss(params, features, labels, train_set, batch, /*lambda=*/0.0,
                      /*dropout_p=*/0.0, flags, mode, rng);
  return g.values.label;
}

}  // namespace gsdn
