#pragma once

// Test-only reference implementations written with explicit scalar loops and
// no library kernels. They pin down the full-graph losses independently of
// the code under test.

#include <cmath>
#include <vector>

#include "gsdn/graph.hpp"
#include "gsdn/model.hpp"

namespace gsdn::testing {

struct OracleOut {
  Matrix<double> h, y, z, ys, zs, proj;
};

inline std::vector<double> naive_softmax(const double* v, std::size_t n) {
  double mx = v[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, v[j]);
  std::vector<double> out(n);
  double sum = 0;
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = std::exp(v[j] - mx);
    sum += out[j];
  }
  for (double& e : out) e /= sum;
  return out;
}

inline OracleOut oracle_forward(const ModelParams<double>& p, const Matrix<double>& x) {
  Matrix<double> h = x;
  for (const auto& l : p.layers) {
    Matrix<double> lin(h.rows, l.w.cols);
    for (std::size_t i = 0; i < h.rows; ++i)
      for (std::size_t j = 0; j < l.w.cols; ++j) {
        double acc = 0;
        for (std::size_t k = 0; k < h.cols; ++k) acc += h(i, k) * l.w(k, j);
        lin(i, j) = std::max(acc, 0.0);  // relu
      }
    for (std::size_t j = 0; j < lin.cols; ++j) {
      const double inv = 1.0 / std::sqrt(l.bn.running_var[j] + kBnEps);
      for (std::size_t i = 0; i < lin.rows; ++i)
        lin(i, j) = (lin(i, j) - l.bn.running_mean[j]) * inv * l.bn_scale(0, j) +
                    l.bn_shift(0, j);
    }
    h = std::move(lin);
  }
  OracleOut o;
  o.h = h;
  auto head = [&](const Matrix<double>& w, const Matrix<double>& b) {
    Matrix<double> out(h.rows, w.cols);
    for (std::size_t i = 0; i < h.rows; ++i)
      for (std::size_t j = 0; j < w.cols; ++j) {
        double acc = b(0, j);
        for (std::size_t k = 0; k < h.cols; ++k) acc += h(i, k) * w(k, j);
        out(i, j) = acc;
      }
    return out;
  };
  o.y = head(p.wf, p.bf);
  o.z = head(p.wg, p.bg);
  o.ys = Matrix<double>(o.y.rows, o.y.cols);
  o.zs = Matrix<double>(o.z.rows, o.z.cols);
  for (std::size_t i = 0; i < o.y.rows; ++i) {
    auto sy = naive_softmax(o.y.row_ptr(i), o.y.cols);
    auto sz = naive_softmax(o.z.row_ptr(i), o.z.cols);
    std::copy(sy.begin(), sy.end(), o.ys.row_ptr(i));
    std::copy(sz.begin(), sz.end(), o.zs.row_ptr(i));
  }
  o.proj = Matrix<double>(x.rows, p.hidden);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t k = 0; k < p.hidden; ++k) {
      double acc = 0;
      for (std::size_t r = 0; r < p.d; ++r) acc += x(i, r) * p.wm(r, k);
      o.proj(i, k) = acc;
    }
  return o;
}

inline double oracle_beta(const ModelParams<double>& p, const OracleOut& o, NodeId i,
                          NodeId j) {
  double acc = 0;
  for (std::size_t k = 0; k < p.hidden; ++k)
    acc += p.attn(k, 0) * o.proj(i, k) + p.attn(p.hidden + k, 0) * o.proj(j, k);
  return 1.0 / (1.0 + std::exp(-acc));
}

inline std::vector<double> oracle_mix_out(const ModelParams<double>& p,
                                          const OracleOut& o, NodeId i, NodeId j,
                                          double beta) {
  std::vector<double> out(p.classes);
  for (std::size_t c = 0; c < p.classes; ++c) {
    double acc = p.bg(0, c);
    for (std::size_t k = 0; k < p.hidden; ++k)
      acc += (beta * o.h(j, k) + (1.0 - beta) * o.h(i, k)) * p.wg(k, c);
    out[c] = acc;
  }
  return out;
}

inline double dist2(const double* a, const double* b, std::size_t n) {
  double acc = 0;
  for (std::size_t k = 0; k < n; ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
  return acc;
}

inline double oracle_feat_full(const ModelParams<double>& p, const GraphDataset& g) {
  const Matrix<double> x = g.features().cast<double>();
  const OracleOut o = oracle_forward(p, x);
  const std::size_t n = g.num_nodes(), c = p.classes;
  double acc = 0;
  std::size_t used = 0;
  for (NodeId i = 0; i < n; ++i) {
    auto [lo, hi] = g.neighbors(i);
    if (lo == hi) continue;
    double pos = 0;
    for (const NodeId* pj = lo; pj != hi; ++pj) {
      const auto zp = oracle_mix_out(p, o, i, *pj, oracle_beta(p, o, i, *pj));
      pos += dist2(o.y.row_ptr(i), zp.data(), c);
    }
    pos /= static_cast<double>(hi - lo);
    double neg = 0;
    std::size_t m = 0;
    for (NodeId k = 0; k < n; ++k) {
      if (k == i || std::binary_search(lo, hi, k)) continue;
      neg += dist2(o.ys.row_ptr(i), o.zs.row_ptr(k), c);
      ++m;
    }
    acc += pos - (m ? neg / m : 0.0);
    ++used;
  }
  return used ? acc / used : 0.0;
}

inline double oracle_label_full(const ModelParams<double>& p, const GraphDataset& g,
                                const SplitMask& split) {
  const Matrix<double> x = g.features().cast<double>();
  const OracleOut o = oracle_forward(p, x);
  auto ce = [&](const Matrix<double>& logits, NodeId row, std::size_t label) {
    const auto sm = naive_softmax(logits.row_ptr(row), logits.cols);
    return -std::log(sm[label]);
  };
  double acc = 0;
  for (NodeId i : split.train) {
    const std::size_t s = g.labels()[i];
    acc += ce(o.y, i, s);
    auto [lo, hi] = g.neighbors(i);
    for (const NodeId* pj = lo; pj != hi; ++pj) acc += ce(o.z, *pj, s);
  }
  return acc;
}

}  // namespace gsdn::testing
