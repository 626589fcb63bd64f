#pragma once

#include <vector>

#include "gsdn/matrix.hpp"

namespace gsdn {

/// Adam first/second moment estimates, one pair per parameter tensor.
template <typename T>
struct AdamState {
  std::vector<Matrix<T>> m;
  std::vector<Matrix<T>> v;
  std::size_t step = 0;

  static AdamState init(const std::vector<Matrix<T>*>& params) {
    AdamState s;
    for (const Matrix<T>* p : params) {
      s.m.emplace_back(p->rows, p->cols);
      s.v.emplace_back(p->rows, p->cols);
    }
    return s;
  }
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// Standard Adam with bias correction; L2 weight decay folded into the
/// gradient (g <- g + decay * w) before the moment updates.
template <typename T>
void adam_step(const std::vector<Matrix<T>*>& params,
               const std::vector<Matrix<T>>& grads, AdamState<T>& state, double lr,
               double weight_decay) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw dim_error("adam_step: parameter/gradient count mismatch");
  ++state.step;
  const double b1 = kAdamBeta1, b2 = kAdamBeta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix<T>& w = *params[p];
    const Matrix<T>& g = grads[p];
    if (!w.same_shape(g)) throw dim_error("adam_step: gradient shape mismatch");
    Matrix<T>& m = state.m[p];
    Matrix<T>& v = state.v[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g.data[i]) +
                        weight_decay * static_cast<double>(w.data[i]);
      const double mi = b1 * static_cast<double>(m.data[i]) + (1.0 - b1) * gi;
      const double vi = b2 * static_cast<double>(v.data[i]) + (1.0 - b2) * gi * gi;
      m.data[i] = static_cast<T>(mi);
      v.data[i] = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      w.data[i] = static_cast<T>(static_cast<double>(w.data[i]) -
                                 lr * mhat / (std::sqrt(vhat) + kAdamEps));
    }
  }
}

}  // namespace gsdn
