#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gsdn {

/// Thrown when operand shapes do not agree.
struct dim_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown on invalid configuration values (rates, counts, ...).
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Deterministic random stream. Every randomized operation in the library
/// takes one of these explicitly; there is no hidden global state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  /// Derive an independent child stream (for per-worker / per-cell seeding).
  Rng fork(std::uint64_t salt) {
    return Rng(engine_() ^ (salt * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull));
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Dense row-major matrix. T is float for training/benchmarks and double
/// for gradient-check builds.
template <typename T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T(0))
      : rows(r), cols(c), data(r * c, fill) {}

  static Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c, T(0)); }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<T>> rws) {
    Matrix m(rws.size(), rws.begin()->size());
    std::size_t i = 0;
    for (const auto& row : rws) {
      if (row.size() != m.cols) throw dim_error("ragged initializer");
      std::size_t j = 0;
      for (T v : row) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  T& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  T operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  T* row_ptr(std::size_t i) { return data.data() + i * cols; }
  const T* row_ptr(std::size_t i) const { return data.data() + i * cols; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename U>
  Matrix<U> cast() const {
    Matrix<U> out(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

namespace detail {

/// Kernel thread count. Set once from config/env; 1 by default. Row-block
/// partitioning keeps results bitwise identical for any fixed count.
inline int& kernel_threads() {
  static int n = 1;
  return n;
}

template <typename T>
void matmul_rows(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out,
                 std::size_t r0, std::size_t r1) {
  const std::size_t n = a.cols, p = b.cols;
  for (std::size_t i = r0; i < r1; ++i) {
    T* orow = out.row_ptr(i);
    const T* arow = a.row_ptr(i);
    for (std::size_t k = 0; k < n; ++k) {
      const T aik = arow[k];
      if (aik == T(0)) continue;
      const T* brow = b.row_ptr(k);
      for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  }
}

}  // namespace detail

inline void set_kernel_threads(int n) {
  if (n < 1) throw config_error("thread count must be >= 1");
  detail::kernel_threads() = n;
}

inline int kernel_threads() { return detail::kernel_threads(); }

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols != b.rows)
    throw dim_error("matmul: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                    " * " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
  Matrix<T> out(a.rows, b.cols);
  const int nt = detail::kernel_threads();
  if (nt <= 1 || a.rows < 64) {
    detail::matmul_rows(a, b, out, 0, a.rows);
    return out;
  }
  std::vector<std::thread> workers;
  const std::size_t chunk = (a.rows + nt - 1) / nt;
  for (int t = 0; t < nt; ++t) {
    const std::size_t r0 = std::min<std::size_t>(t * chunk, a.rows);
    const std::size_t r1 = std::min<std::size_t>(r0 + chunk, a.rows);
    if (r0 < r1)
      workers.emplace_back([&, r0, r1] { detail::matmul_rows(a, b, out, r0, r1); });
  }
  for (auto& w : workers) w.join();
  return out;
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> out(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
  return out;
}

template <typename T>
Matrix<T> add(const Matrix<T>& a, const Matrix<T>& b) {
  if (!a.same_shape(b)) throw dim_error("add: shape mismatch");
  Matrix<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
  return out;
}

template <typename T>
Matrix<T> relu(const Matrix<T>& x) {
  Matrix<T> out = x;
  for (T& v : out.data) v = v > T(0) ? v : T(0);
  return out;
}

template <typename T>
Matrix<T> sigmoid(const Matrix<T>& x) {
  Matrix<T> out = x;
  for (T& v : out.data) {
    // split on sign to avoid exp overflow
    v = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                  : std::exp(v) / (T(1) + std::exp(v));
  }
  return out;
}

/// Softmax per row with max-subtraction for stability.
template <typename T>
Matrix<T> row_softmax(const Matrix<T>& x) {
  Matrix<T> out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const T* in = x.row_ptr(i);
    T* o = out.row_ptr(i);
    T mx = in[0];
    for (std::size_t j = 1; j < x.cols; ++j) mx = std::max(mx, in[j]);
    T sum = T(0);
    for (std::size_t j = 0; j < x.cols; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < x.cols; ++j) o[j] /= sum;
  }
  return out;
}

/// Squared L2 distance between two equal-length vectors.
template <typename T>
T sq_l2(const T* u, const T* v, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T d = u[i] - v[i];
    acc += d * d;
  }
  return acc;
}

template <typename T>
T sq_l2(const std::vector<T>& u, const std::vector<T>& v) {
  if (u.size() != v.size()) throw dim_error("sq_l2: length mismatch");
  return sq_l2(u.data(), v.data(), u.size());
}

/// -log softmax(logits)[label], via log-sum-exp.
template <typename T>
T cross_entropy(const T* logits, std::size_t n, std::size_t label) {
  if (label >= n) throw dim_error("cross_entropy: label out of range");
  T mx = logits[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, logits[j]);
  T lse = T(0);
  for (std::size_t j = 0; j < n; ++j) lse += std::exp(logits[j] - mx);
  return std::log(lse) - (logits[label] - mx);
}

template <typename T>
T cross_entropy(const std::vector<T>& logits, std::size_t label) {
  return cross_entropy(logits.data(), logits.size(), label);
}

/// Per-column batch-normalization state: learned affine lives in the model
/// params; this struct only carries the running statistics.
template <typename T>
struct BnStats {
  std::vector<T> running_mean;
  std::vector<T> running_var;

  explicit BnStats(std::size_t cols = 0)
      : running_mean(cols, T(0)), running_var(cols, T(1)) {}
};

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

enum class Mode { train, eval };

/// Standalone batchnorm (the taped version lives in tape.hpp). Train mode
/// standardizes with batch statistics and updates the running stats.
template <typename T>
Matrix<T> batchnorm(const Matrix<T>& x, const std::vector<T>& scale,
                    const std::vector<T>& shift, BnStats<T>& state, Mode mode,
                    T eps = T(kBnEps), T momentum = T(kBnMomentum)) {
  if (scale.size() != x.cols || shift.size() != x.cols ||
      state.running_mean.size() != x.cols)
    throw dim_error("batchnorm: column mismatch");
  Matrix<T> out(x.rows, x.cols);
  if (mode == Mode::train) {
    if (x.rows < 2) throw dim_error("batchnorm: train mode needs >= 2 rows");
    for (std::size_t j = 0; j < x.cols; ++j) {
      T mean = T(0);
      for (std::size_t i = 0; i < x.rows; ++i) mean += x(i, j);
      mean /= T(x.rows);
      T var = T(0);
      for (std::size_t i = 0; i < x.rows; ++i) {
        const T d = x(i, j) - mean;
        var += d * d;
      }
      var /= T(x.rows);
      const T inv = T(1) / std::sqrt(var + eps);
      for (std::size_t i = 0; i < x.rows; ++i)
        out(i, j) = (x(i, j) - mean) * inv * scale[j] + shift[j];
      state.running_mean[j] = (T(1) - momentum) * state.running_mean[j] + momentum * mean;
      state.running_var[j] = (T(1) - momentum) * state.running_var[j] + momentum * var;
    }
  } else {
    for (std::size_t j = 0; j < x.cols; ++j) {
      const T inv = T(1) / std::sqrt(state.running_var[j] + eps);
      for (std::size_t i = 0; i < x.rows; ++i)
        out(i, j) = (x(i, j) - state.running_mean[j]) * inv * scale[j] + shift[j];
    }
  }
  return out;
}

/// Inverted dropout: survivors rescaled by 1/(1-p) so eval is an identity.
template <typename T>
Matrix<T> dropout(const Matrix<T>& x, double p, Mode mode, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw config_error("dropout rate must be in [0,1)");
  if (mode == Mode::eval || p == 0.0) return x;
  Matrix<T> out = x;
  const T keep_scale = T(1.0 / (1.0 - p));
  for (T& v : out.data) v = rng.uniform() < p ? T(0) : v * keep_scale;
  return out;
}

}  // namespace gsdn
