#pragma once

// Test-only finite-difference oracle. Central differences with h = 1e-5 on
// 64-bit values; independent of the tape's backward pass.

#include <functional>
#include <vector>

#include "gsdn/matrix.hpp"

namespace gsdn::testing {

struct FdReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t checked = 0;
};

/// Compare an analytic gradient against central finite differences of a
/// scalar-valued function of one parameter matrix. `eval` must be a pure
/// function of the current parameter contents.
inline FdReport fd_compare(Matrix<double>& param, const Matrix<double>& analytic,
                           const std::function<double()>& eval, double h = 1e-5) {
  FdReport rep;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double orig = param.data[i];
    param.data[i] = orig + h;
    const double up = eval();
    param.data[i] = orig - h;
    const double down = eval();
    param.data[i] = orig;
    const double fd = (up - down) / (2.0 * h);
    const double an = analytic.data[i];
    const double abs_err = std::abs(fd - an);
    // denominator floor keeps FD roundoff (~1e-10) from dominating when the
    // true gradient entry is exactly zero
    const double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
    rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
    rep.max_rel_err = std::max(rep.max_rel_err, abs_err / denom);
    ++rep.checked;
  }
  return rep;
}

}  // namespace gsdn::testing
