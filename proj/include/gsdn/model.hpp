#pragma once

#include <cstdint>
#include <vector>

#include "gsdn/matrix.hpp"
#include "gsdn/tape.hpp"

namespace gsdn {

/// One backbone layer: linear weight plus batchnorm affine and running stats.
template <typename T>
struct LayerParams {
  Matrix<T> w;         // in x F
  Matrix<T> bn_scale;  // 1 x F
  Matrix<T> bn_shift;  // 1 x F
  BnStats<T> bn;
};

/// All learnable state of the GSDN network: L-layer MLP backbone, the two
/// inference heads (f for the target node, g for the neighborhood), and the
/// learnable-mixup module (projection + attention vector).
template <typename T>
struct ModelParams {
  std::size_t d = 0, hidden = 0, layers_n = 0, classes = 0;
  std::vector<LayerParams<T>> layers;
  Matrix<T> wf, bf;       // head f: F x C, 1 x C
  Matrix<T> wg, bg;       // head g: F x C, 1 x C
  Matrix<T> wm;           // mixup projection: d x F
  Matrix<T> attn;         // mixup attention vector: 2F x 1

  /// Ordered list of trainable tensors (running BN stats excluded).
  std::vector<Matrix<T>*> trainable() {
    std::vector<Matrix<T>*> out;
    for (auto& l : layers) {
      out.push_back(&l.w);
      out.push_back(&l.bn_scale);
      out.push_back(&l.bn_shift);
    }
    out.push_back(&wf);
    out.push_back(&bf);
    out.push_back(&wg);
    out.push_back(&bg);
    out.push_back(&wm);
    out.push_back(&attn);
    return out;
  }

  std::vector<const Matrix<T>*> trainable() const {
    auto mut = const_cast<ModelParams*>(this)->trainable();
    return {mut.begin(), mut.end()};
  }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.d = d;
    out.hidden = hidden;
    out.layers_n = layers_n;
    out.classes = classes;
    for (const auto& l : layers) {
      LayerParams<U> lo;
      lo.w = l.w.template cast<U>();
      lo.bn_scale = l.bn_scale.template cast<U>();
      lo.bn_shift = l.bn_shift.template cast<U>();
      lo.bn = BnStats<U>(l.bn.running_mean.size());
      for (std::size_t j = 0; j < l.bn.running_mean.size(); ++j) {
        lo.bn.running_mean[j] = static_cast<U>(l.bn.running_mean[j]);
        lo.bn.running_var[j] = static_cast<U>(l.bn.running_var[j]);
      }
      out.layers.push_back(std::move(lo));
    }
    out.wf = wf.template cast<U>();
    out.bf = bf.template cast<U>();
    out.wg = wg.template cast<U>();
    out.bg = bg.template cast<U>();
    out.wm = wm.template cast<U>();
    out.attn = attn.template cast<U>();
    return out;
  }
};

namespace detail {

template <typename T>
Matrix<T> glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix<T> m(fan_in, fan_out);
  for (T& v : m.data) v = static_cast<T>(rng.uniform(-bound, bound));
  return m;
}

}  // namespace detail

/// Glorot-uniform weights, zero biases, identity batchnorm affine, zero
/// attention vector (so the first mixup step interpolates at beta = 0.5).
template <typename T>
ModelParams<T> init_params(std::size_t d, std::size_t hidden, std::size_t layers,
                           std::size_t classes, std::uint64_t seed) {
  if (d < 1 || hidden < 1 || layers < 1 || classes < 1)
    throw config_error("init_params: all dimensions must be >= 1");
  Rng rng(seed);
  ModelParams<T> p;
  p.d = d;
  p.hidden = hidden;
  p.layers_n = layers;
  p.classes = classes;
  for (std::size_t l = 0; l < layers; ++l) {
    LayerParams<T> lp;
    const std::size_t in = l == 0 ? d : hidden;
    lp.w = detail::glorot_uniform<T>(in, hidden, rng);
    lp.bn_scale = Matrix<T>(1, hidden, T(1));
    lp.bn_shift = Matrix<T>(1, hidden, T(0));
    lp.bn = BnStats<T>(hidden);
    p.layers.push_back(std::move(lp));
  }
  p.wf = detail::glorot_uniform<T>(hidden, classes, rng);
  p.bf = Matrix<T>(1, classes);
  p.wg = detail::glorot_uniform<T>(hidden, classes, rng);
  p.bg = Matrix<T>(1, classes);
  p.wm = detail::glorot_uniform<T>(d, hidden, rng);
  p.attn = Matrix<T>(2 * hidden, 1);
  return p;
}

// ---------------------------------------------------------------------------
// Plain (untaped) forward path: inference and diagnostics.

/// L backbone layers in Eq-order: linear, ReLU, BN, dropout. Eval mode uses
/// running BN statistics and skips dropout; it never mutates the params.
template <typename T>
Matrix<T> backbone_forward_eval(const ModelParams<T>& params, const Matrix<T>& x) {
  if (x.cols != params.d) throw dim_error("backbone: input width != d");
  Matrix<T> h = x;
  for (const auto& layer : params.layers) {
    h = matmul(h, layer.w);
    h = relu(h);
    // eval-mode batchnorm, running stats only
    auto& stats = const_cast<BnStats<T>&>(layer.bn);
    h = batchnorm(h, std::vector<T>(layer.bn_scale.data),
                  std::vector<T>(layer.bn_shift.data), stats, Mode::eval);
  }
  return h;
}

template <typename T>
Matrix<T> head_f(const ModelParams<T>& params, const Matrix<T>& h) {
  Matrix<T> y = matmul(h, params.wf);
  for (std::size_t i = 0; i < y.rows; ++i)
    for (std::size_t j = 0; j < y.cols; ++j) y(i, j) += params.bf(0, j);
  return y;
}

template <typename T>
Matrix<T> head_g(const ModelParams<T>& params, const Matrix<T>& h) {
  Matrix<T> z = matmul(h, params.wg);
  for (std::size_t i = 0; i < z.rows; ++i)
    for (std::size_t j = 0; j < z.cols; ++j) z(i, j) += params.bg(0, j);
  return z;
}

/// Mixup coefficient beta_{i,j} = sigmoid(a . [x_i Wm || x_j Wm]). Computed
/// from raw features; asymmetric in (i, j) by the concat order.
template <typename T>
T mixup_coeff(const ModelParams<T>& params, const T* xi, const T* xj) {
  const std::size_t f = params.hidden;
  T acc = T(0);
  for (std::size_t k = 0; k < f; ++k) {
    T pi = T(0), pj = T(0);
    for (std::size_t r = 0; r < params.d; ++r) {
      pi += xi[r] * params.wm(r, k);
      pj += xj[r] * params.wm(r, k);
    }
    acc += params.attn(k, 0) * pi + params.attn(f + k, 0) * pj;
  }
  const double a = static_cast<double>(acc);
  return static_cast<T>(a >= 0 ? 1.0 / (1.0 + std::exp(-a))
                               : std::exp(a) / (1.0 + std::exp(a)));
}

/// g-head applied to the beta-interpolation of the two final embeddings;
/// beta weights the neighbor side h_j.
template <typename T>
std::vector<T> mixup_embed(const ModelParams<T>& params, const T* hi, const T* hj,
                           T beta) {
  Matrix<T> mixed(1, params.hidden);
  for (std::size_t k = 0; k < params.hidden; ++k)
    mixed(0, k) = beta * hj[k] + (T(1) - beta) * hi[k];
  Matrix<T> z = head_g(params, mixed);
  return z.data;
}

/// Single-node-capable inference: argmax of head f over the eval backbone.
/// Touches only the given feature rows; no adjacency, no head g.
template <typename T>
std::vector<std::size_t> predict(const ModelParams<T>& params, const Matrix<T>& x) {
  Matrix<T> y = head_f(params, backbone_forward_eval(params, x));
  std::vector<std::size_t> out(y.rows);
  for (std::size_t i = 0; i < y.rows; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < y.cols; ++j)
      if (y(i, j) > y(i, best)) best = j;
    out[i] = best;
  }
  return out;
}

template <typename T>
double accuracy(const ModelParams<T>& params, const Matrix<T>& features,
                const std::vector<std::size_t>& labels,
                const std::vector<std::size_t>& nodes) {
  if (nodes.empty()) return 0.0;
  Matrix<T> x(nodes.size(), features.cols);
  for (std::size_t i = 0; i < nodes.size(); ++i)
    std::copy_n(features.row_ptr(nodes[i]), features.cols, x.row_ptr(i));
  const auto pred = predict(params, x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (pred[i] == labels[nodes[i]]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(nodes.size());
}

// ---------------------------------------------------------------------------
// Taped forward path: training.

/// Parameter ids of one model registered on a tape, plus helpers that build
/// the forward graph. Register once per optimizer step.
template <typename T>
struct TapedModel {
  GradTape<T>* tape = nullptr;
  ModelParams<T>* params = nullptr;
  std::vector<ValueId> layer_w, layer_scale, layer_shift;
  ValueId wf, bf, wg, bg, wm, attn;

  static TapedModel attach(GradTape<T>& tape, ModelParams<T>& p) {
    TapedModel m;
    m.tape = &tape;
    m.params = &p;
    for (auto& l : p.layers) {
      m.layer_w.push_back(tape.leaf(l.w));
      m.layer_scale.push_back(tape.leaf(l.bn_scale));
      m.layer_shift.push_back(tape.leaf(l.bn_shift));
    }
    m.wf = tape.leaf(p.wf);
    m.bf = tape.leaf(p.bf);
    m.wg = tape.leaf(p.wg);
    m.bg = tape.leaf(p.bg);
    m.wm = tape.leaf(p.wm);
    m.attn = tape.leaf(p.attn);
    return m;
  }

  /// Gradients in the same order as ModelParams::trainable().
  std::vector<Matrix<T>> gradients() const {
    std::vector<Matrix<T>> out;
    for (std::size_t l = 0; l < layer_w.size(); ++l) {
      out.push_back(tape->grad_or_zero(layer_w[l]));
      out.push_back(tape->grad_or_zero(layer_scale[l]));
      out.push_back(tape->grad_or_zero(layer_shift[l]));
    }
    for (ValueId id : {wf, bf, wg, bg, wm, attn}) out.push_back(tape->grad_or_zero(id));
    return out;
  }

  /// Taped Eq-order backbone. Train mode updates the params' running BN
  /// stats as a side effect of the forward pass.
  ValueId backbone(ValueId x, Mode mode, double dropout_p, Rng& rng) {
    ValueId h = x;
    for (std::size_t l = 0; l < params->layers.size(); ++l) {
      h = tape->matmul(h, layer_w[l]);
      h = tape->relu(h);
      h = tape->batchnorm(h, layer_scale[l], layer_shift[l], params->layers[l].bn, mode);
      if (mode == Mode::train) h = tape->dropout(h, dropout_p, mode, rng);
    }
    return h;
  }

  ValueId apply_head_f(ValueId h) { return tape->add_row_broadcast(tape->matmul(h, wf), bf); }
  ValueId apply_head_g(ValueId h) { return tape->add_row_broadcast(tape->matmul(h, wg), bg); }
};

}  // namespace gsdn
