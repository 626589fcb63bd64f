#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "gsdn/gcn.hpp"
#include "gsdn/model.hpp"

namespace gsdn {

struct LatencyStats {
  double median_ms = 0.0;
  double iqr_ms = 0.0;
  std::size_t reps = 0;
  int threads = 1;
  std::vector<double> samples_ms;
};

namespace detail {

inline double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * (v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - lo;
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

template <typename F>
LatencyStats time_reps(F&& run_once, std::size_t reps, std::size_t warmup) {
  for (std::size_t i = 0; i < warmup; ++i) run_once();
  LatencyStats st;
  st.reps = reps;
  st.threads = kernel_threads();
  for (std::size_t i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    run_once();
    const auto t1 = std::chrono::steady_clock::now();
    st.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  st.median_ms = percentile(st.samples_ms, 0.5);
  st.iqr_ms = percentile(st.samples_ms, 0.75) - percentile(st.samples_ms, 0.25);
  return st;
}

}  // namespace detail

/// Wall-clock full-graph GSDN inference: backbone + head f over all rows.
/// Asserts zero adjacency reads over the timed region.
template <typename T>
LatencyStats bench_gsdn_latency(const ModelParams<T>& params, const GraphDataset& g,
                                std::size_t reps, std::size_t warmup = 3) {
  if (reps < 5) throw config_error("bench: reps must be >= 5");
  const Matrix<T> x = g.features().template cast<T>();
  volatile T sink = T(0);
  const std::uint64_t reads_before = g.adjacency_reads();
  auto st = detail::time_reps(
      [&] {
        const Matrix<T> y = head_f(params, backbone_forward_eval(params, x));
        sink = sink + y(0, 0);
      },
      reps, warmup);
  if (g.adjacency_reads() != reads_before)
    throw std::logic_error("GSDN inference touched adjacency");
  return st;
}

/// Wall-clock full-graph GCN inference over the normalized adjacency.
template <typename T>
LatencyStats bench_gcn_latency(const GcnParams<T>& params,
                               const NormalizedAdjacency<T>& adj, const GraphDataset& g,
                               std::size_t reps, std::size_t warmup = 3) {
  if (reps < 5) throw config_error("bench: reps must be >= 5");
  const Matrix<T> x = g.features().template cast<T>();
  volatile T sink = T(0);
  return detail::time_reps(
      [&] {
        const Matrix<T> y = gcn_forward(params, adj, x);
        sink = sink + y(0, 0);
      },
      reps, warmup);
}

/// One row of the benchmark results CSV.
struct BenchRow {
  std::string model;
  std::string dataset;
  std::size_t num_nodes = 0;
  std::size_t num_edges = 0;
  std::size_t layers = 0;
  std::size_t hidden = 0;
  double median_ms = 0.0;
  double iqr_ms = 0.0;
  std::size_t reps = 0;
  int threads = 1;
  std::size_t fetched_nodes = 0;  // per-target fetch count at this depth
};

/// Least-squares line fit quality; used to test latency-vs-depth linearity.
inline double linear_fit_r2(const std::vector<double>& xs, const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (syy == 0.0) return 1.0;
  const double slope = sxy / sxx;
  double ss_res = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pred = my + slope * (xs[i] - mx);
    ss_res += (ys[i] - pred) * (ys[i] - pred);
  }
  return 1.0 - ss_res / syy;
}

}  // namespace gsdn
