#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "gsdn/matrix.hpp"

namespace gsdn {

/// Handle to a value recorded on a GradTape.
struct ValueId {
  std::size_t idx = static_cast<std::size_t>(-1);
  bool valid() const { return idx != static_cast<std::size_t>(-1); }
};

/// Minimal reverse-mode tape over matrix-valued primitives. It covers
/// exactly the operation set the losses in this repository need; it is not
/// a general autodiff system. Values are recorded in forward order and
/// gradients are accumulated by replaying backward functions in reverse.
template <typename T>
class GradTape {
 public:
  /// Record a leaf. Parameters and constants are both leaves; the caller
  /// keeps the ids of the matrices it wants gradients for.
  ValueId leaf(Matrix<T> v) {
    nodes_.push_back(Node{std::move(v), {}, nullptr});
    return ValueId{nodes_.size() - 1};
  }

  const Matrix<T>& value(ValueId id) const { return nodes_[id.idx].value; }
  const Matrix<T>& grad(ValueId id) const { return nodes_[id.idx].grad; }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  ValueId matmul(ValueId a, ValueId b) {
    Matrix<T> out = gsdn::matmul(value(a), value(b));
    return record(std::move(out), [a, b](GradTape& t, const Matrix<T>& g) {
      t.accumulate(a, gsdn::matmul(g, transpose(t.value(b))));
      t.accumulate(b, gsdn::matmul(transpose(t.value(a)), g));
    });
  }

  ValueId add(ValueId a, ValueId b) {
    Matrix<T> out = gsdn::add(value(a), value(b));
    return record(std::move(out), [a, b](GradTape& t, const Matrix<T>& g) {
      t.accumulate(a, g);
      t.accumulate(b, g);
    });
  }

  ValueId sub(ValueId a, ValueId b) {
    Matrix<T> out = value(a);
    const Matrix<T>& bv = value(b);
    if (!out.same_shape(bv)) throw dim_error("sub: shape mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= bv.data[i];
    return record(std::move(out), [a, b](GradTape& t, const Matrix<T>& g) {
      t.accumulate(a, g);
      Matrix<T> neg = g;
      for (T& v : neg.data) v = -v;
      t.accumulate(b, neg);
    });
  }

  ValueId scale(ValueId a, T c) {
    Matrix<T> out = value(a);
    for (T& v : out.data) v *= c;
    return record(std::move(out), [a, c](GradTape& t, const Matrix<T>& g) {
      Matrix<T> ga = g;
      for (T& v : ga.data) v *= c;
      t.accumulate(a, ga);
    });
  }

  /// Broadcast-add a 1xC bias row to every row of a.
  ValueId add_row_broadcast(ValueId a, ValueId bias) {
    const Matrix<T>& av = value(a);
    const Matrix<T>& bv = value(bias);
    if (bv.rows != 1 || bv.cols != av.cols) throw dim_error("bias shape");
    Matrix<T> out = av;
    for (std::size_t i = 0; i < out.rows; ++i)
      for (std::size_t j = 0; j < out.cols; ++j) out(i, j) += bv(0, j);
    return record(std::move(out), [a, bias](GradTape& t, const Matrix<T>& g) {
      t.accumulate(a, g);
      Matrix<T> gb(1, g.cols);
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j) gb(0, j) += g(i, j);
      t.accumulate(bias, gb);
    });
  }

  ValueId relu(ValueId a) {
    Matrix<T> out = gsdn::relu(value(a));
    return record(std::move(out), [a](GradTape& t, const Matrix<T>& g) {
      Matrix<T> ga = g;
      const Matrix<T>& av = t.value(a);
      for (std::size_t i = 0; i < ga.size(); ++i)
        if (av.data[i] <= T(0)) ga.data[i] = T(0);
      t.accumulate(a, ga);
    });
  }

  ValueId sigmoid(ValueId a) {
    Matrix<T> out = gsdn::sigmoid(value(a));
    ValueId self = record(std::move(out), nullptr);
    nodes_[self.idx].backward = [a, self](GradTape& t, const Matrix<T>& g) {
      const Matrix<T>& s = t.value(self);
      Matrix<T> ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i)
        ga.data[i] *= s.data[i] * (T(1) - s.data[i]);
      t.accumulate(a, ga);
    };
    return self;
  }

  /// Batchnorm over the rows of x with learned per-column scale/shift.
  /// Train mode differentiates through the batch statistics and updates
  /// the caller's running stats as a side effect; eval mode uses the
  /// running stats (no side effect, no stat gradients).
  ValueId batchnorm(ValueId x, ValueId scale_id, ValueId shift_id, BnStats<T>& state,
                    Mode mode, T eps = T(kBnEps), T momentum = T(kBnMomentum)) {
    const Matrix<T>& xv = value(x);
    const std::size_t n = xv.rows, c = xv.cols;
    if (value(scale_id).cols != c || value(shift_id).cols != c)
      throw dim_error("batchnorm: scale/shift column mismatch");
    if (mode == Mode::eval) {
      Matrix<T> xhat(n, c);
      std::vector<T> inv(c);
      for (std::size_t j = 0; j < c; ++j)
        inv[j] = T(1) / std::sqrt(state.running_var[j] + eps);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j)
          xhat(i, j) = (xv(i, j) - state.running_mean[j]) * inv[j];
      return affine_norm(x, scale_id, shift_id, std::move(xhat), std::move(inv),
                         /*through_stats=*/false);
    }
    if (n < 2) throw dim_error("batchnorm: train mode needs >= 2 rows");
    std::vector<T> mean(c, T(0)), inv(c);
    Matrix<T> xhat(n, c);
    for (std::size_t j = 0; j < c; ++j) {
      for (std::size_t i = 0; i < n; ++i) mean[j] += xv(i, j);
      mean[j] /= T(n);
      T var = T(0);
      for (std::size_t i = 0; i < n; ++i) {
        const T d = xv(i, j) - mean[j];
        var += d * d;
      }
      var /= T(n);
      inv[j] = T(1) / std::sqrt(var + eps);
      for (std::size_t i = 0; i < n; ++i) xhat(i, j) = (xv(i, j) - mean[j]) * inv[j];
      state.running_mean[j] = (T(1) - momentum) * state.running_mean[j] + momentum * mean[j];
      state.running_var[j] = (T(1) - momentum) * state.running_var[j] + momentum * var;
    }
    return affine_norm(x, scale_id, shift_id, std::move(xhat), std::move(inv),
                       /*through_stats=*/true);
  }

  ValueId dropout(ValueId a, double p, Mode mode, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw config_error("dropout rate must be in [0,1)");
    if (mode == Mode::eval || p == 0.0) return a;
    const Matrix<T>& av = value(a);
    Matrix<T> out = av;
    auto mask = std::make_shared<std::vector<bool>>(av.size());
    const T keep_scale = T(1.0 / (1.0 - p));
    for (std::size_t i = 0; i < out.size(); ++i) {
      const bool keep = rng.uniform() >= p;
      (*mask)[i] = keep;
      out.data[i] = keep ? out.data[i] * keep_scale : T(0);
    }
    return record(std::move(out), [a, mask, keep_scale](GradTape& t, const Matrix<T>& g) {
      Matrix<T> ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i)
        ga.data[i] = (*mask)[i] ? ga.data[i] * keep_scale : T(0);
      t.accumulate(a, ga);
    });
  }

  /// Select rows of a by index (repeats allowed); backward scatters-adds.
  ValueId gather_rows(ValueId a, std::vector<std::size_t> idx) {
    const Matrix<T>& av = value(a);
    Matrix<T> out(idx.size(), av.cols);
    for (std::size_t i = 0; i < idx.size(); ++i)
      std::copy_n(av.row_ptr(idx[i]), av.cols, out.row_ptr(i));
    auto ix = std::make_shared<std::vector<std::size_t>>(std::move(idx));
    return record(std::move(out), [a, ix](GradTape& t, const Matrix<T>& g) {
      Matrix<T> ga(t.value(a).rows, t.value(a).cols);
      for (std::size_t i = 0; i < ix->size(); ++i) {
        T* dst = ga.row_ptr((*ix)[i]);
        const T* src = g.row_ptr(i);
        for (std::size_t j = 0; j < g.cols; ++j) dst[j] += src[j];
      }
      t.accumulate(a, ga);
    });
  }

  ValueId concat_cols(ValueId a, ValueId b) {
    const Matrix<T>& av = value(a);
    const Matrix<T>& bv = value(b);
    if (av.rows != bv.rows) throw dim_error("concat_cols: row mismatch");
    Matrix<T> out(av.rows, av.cols + bv.cols);
    for (std::size_t i = 0; i < av.rows; ++i) {
      std::copy_n(av.row_ptr(i), av.cols, out.row_ptr(i));
      std::copy_n(bv.row_ptr(i), bv.cols, out.row_ptr(i) + av.cols);
    }
    return record(std::move(out), [a, b](GradTape& t, const Matrix<T>& g) {
      const std::size_t ca = t.value(a).cols, cb = t.value(b).cols;
      Matrix<T> ga(g.rows, ca), gb(g.rows, cb);
      for (std::size_t i = 0; i < g.rows; ++i) {
        std::copy_n(g.row_ptr(i), ca, ga.row_ptr(i));
        std::copy_n(g.row_ptr(i) + ca, cb, gb.row_ptr(i));
      }
      t.accumulate(a, ga);
      t.accumulate(b, gb);
    });
  }

  /// m (n x k) times column vector v (k x 1) -> (n x 1).
  ValueId matvec(ValueId m, ValueId v) {
    const Matrix<T>& mv = value(m);
    const Matrix<T>& vv = value(v);
    if (vv.cols != 1 || vv.rows != mv.cols) throw dim_error("matvec: shape");
    Matrix<T> out(mv.rows, 1);
    for (std::size_t i = 0; i < mv.rows; ++i) {
      T acc = T(0);
      for (std::size_t j = 0; j < mv.cols; ++j) acc += mv(i, j) * vv(j, 0);
      out(i, 0) = acc;
    }
    return record(std::move(out), [m, v](GradTape& t, const Matrix<T>& g) {
      const Matrix<T>& mv = t.value(m);
      const Matrix<T>& vv = t.value(v);
      Matrix<T> gm(mv.rows, mv.cols), gv(vv.rows, 1);
      for (std::size_t i = 0; i < mv.rows; ++i)
        for (std::size_t j = 0; j < mv.cols; ++j) {
          gm(i, j) = g(i, 0) * vv(j, 0);
          gv(j, 0) += g(i, 0) * mv(i, j);
        }
      t.accumulate(m, gm);
      t.accumulate(v, gv);
    });
  }

  /// Row-wise convex mix: out[r] = beta[r]*hj[r] + (1-beta[r])*hi[r],
  /// with beta an (n x 1) column broadcast over the feature axis.
  ValueId row_mix(ValueId hi, ValueId hj, ValueId beta) {
    const Matrix<T>& a = value(hi);
    const Matrix<T>& b = value(hj);
    const Matrix<T>& be = value(beta);
    if (!a.same_shape(b) || be.rows != a.rows || be.cols != 1)
      throw dim_error("row_mix: shape");
    Matrix<T> out(a.rows, a.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
      const T t = be(i, 0);
      for (std::size_t j = 0; j < a.cols; ++j)
        out(i, j) = t * b(i, j) + (T(1) - t) * a(i, j);
    }
    return record(std::move(out), [hi, hj, beta](GradTape& t, const Matrix<T>& g) {
      const Matrix<T>& a = t.value(hi);
      const Matrix<T>& b = t.value(hj);
      const Matrix<T>& be = t.value(beta);
      Matrix<T> ga(a.rows, a.cols), gb(a.rows, a.cols), gbe(a.rows, 1);
      for (std::size_t i = 0; i < a.rows; ++i) {
        const T bt = be(i, 0);
        T acc = T(0);
        for (std::size_t j = 0; j < a.cols; ++j) {
          ga(i, j) = g(i, j) * (T(1) - bt);
          gb(i, j) = g(i, j) * bt;
          acc += g(i, j) * (b(i, j) - a(i, j));
        }
        gbe(i, 0) = acc;
      }
      t.accumulate(hi, ga);
      t.accumulate(hj, gb);
      t.accumulate(beta, gbe);
    });
  }

  ValueId row_softmax(ValueId a) {
    Matrix<T> out = gsdn::row_softmax(value(a));
    ValueId self = record(std::move(out), nullptr);
    nodes_[self.idx].backward = [a, self](GradTape& t, const Matrix<T>& g) {
      const Matrix<T>& s = t.value(self);
      Matrix<T> ga(g.rows, g.cols);
      for (std::size_t i = 0; i < g.rows; ++i) {
        T dot = T(0);
        for (std::size_t j = 0; j < g.cols; ++j) dot += g(i, j) * s(i, j);
        for (std::size_t j = 0; j < g.cols; ++j)
          ga(i, j) = s(i, j) * (g(i, j) - dot);
      }
      t.accumulate(a, ga);
    };
    return self;
  }

  /// Per-row squared L2 distance: (n x c, n x c) -> (n x 1).
  ValueId rowwise_sqdist(ValueId a, ValueId b) {
    const Matrix<T>& av = value(a);
    const Matrix<T>& bv = value(b);
    if (!av.same_shape(bv)) throw dim_error("rowwise_sqdist: shape");
    Matrix<T> out(av.rows, 1);
    for (std::size_t i = 0; i < av.rows; ++i)
      out(i, 0) = sq_l2(av.row_ptr(i), bv.row_ptr(i), av.cols);
    return record(std::move(out), [a, b](GradTape& t, const Matrix<T>& g) {
      const Matrix<T>& av = t.value(a);
      const Matrix<T>& bv = t.value(b);
      Matrix<T> ga(av.rows, av.cols), gb(av.rows, av.cols);
      for (std::size_t i = 0; i < av.rows; ++i)
        for (std::size_t j = 0; j < av.cols; ++j) {
          const T d = T(2) * (av(i, j) - bv(i, j)) * g(i, 0);
          ga(i, j) = d;
          gb(i, j) = -d;
        }
      t.accumulate(a, ga);
      t.accumulate(b, gb);
    });
  }

  /// Fused softmax cross-entropy per row: (n x C) logits -> (n x 1) losses.
  ValueId ce_rows(ValueId logits, std::vector<std::size_t> labels) {
    const Matrix<T>& lv = value(logits);
    if (labels.size() != lv.rows) throw dim_error("ce_rows: label count");
    Matrix<T> out(lv.rows, 1);
    for (std::size_t i = 0; i < lv.rows; ++i) {
      if (labels[i] >= lv.cols) throw dim_error("ce_rows: label out of range");
      out(i, 0) = cross_entropy(lv.row_ptr(i), lv.cols, labels[i]);
    }
    auto lab = std::make_shared<std::vector<std::size_t>>(std::move(labels));
    return record(std::move(out), [logits, lab](GradTape& t, const Matrix<T>& g) {
      Matrix<T> sm = gsdn::row_softmax(t.value(logits));
      for (std::size_t i = 0; i < sm.rows; ++i) {
        sm(i, (*lab)[i]) -= T(1);
        for (std::size_t j = 0; j < sm.cols; ++j) sm(i, j) *= g(i, 0);
      }
      t.accumulate(logits, sm);
    });
  }

  /// Sum of all entries -> 1x1.
  ValueId sum(ValueId a) {
    const Matrix<T>& av = value(a);
    Matrix<T> out(1, 1);
    for (T v : av.data) out(0, 0) += v;
    return record(std::move(out), [a](GradTape& t, const Matrix<T>& g) {
      Matrix<T> ga(t.value(a).rows, t.value(a).cols, g(0, 0));
      t.accumulate(a, ga);
    });
  }

  ValueId mean(ValueId a) {
    const std::size_t n = value(a).size();
    return scale(sum(a), T(1) / T(n));
  }

  /// Sparse (CSR) times dense; the sparse factor is a constant. Backward
  /// uses the same matrix, which is valid because every adjacency this
  /// repo builds is symmetric.
  ValueId spmm_symmetric(const std::vector<std::size_t>& row_ptr,
                         const std::vector<std::size_t>& col_idx,
                         const std::vector<T>& vals, ValueId h) {
    auto apply = [&row_ptr, &col_idx, &vals](const Matrix<T>& m) {
      Matrix<T> out(row_ptr.size() - 1, m.cols);
      for (std::size_t i = 0; i + 1 < row_ptr.size(); ++i) {
        T* orow = out.row_ptr(i);
        for (std::size_t e = row_ptr[i]; e < row_ptr[i + 1]; ++e) {
          const T w = vals[e];
          const T* src = m.row_ptr(col_idx[e]);
          for (std::size_t j = 0; j < m.cols; ++j) orow[j] += w * src[j];
        }
      }
      return out;
    };
    Matrix<T> out = apply(value(h));
    return record(std::move(out), [h, apply](GradTape& t, const Matrix<T>& g) {
      t.accumulate(h, apply(g));
    });
  }

  /// Run reverse accumulation from a 1x1 loss node.
  void backward(ValueId loss) {
    if (value(loss).rows != 1 || value(loss).cols != 1)
      throw dim_error("backward: loss must be a 1x1 scalar");
    for (auto& n : nodes_) n.grad = Matrix<T>();
    nodes_[loss.idx].grad = Matrix<T>(1, 1, T(1));
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() > 0) n.backward(*this, n.grad);
    }
  }

  /// Gradient of a parameter leaf, zero-shaped like its value if untouched.
  Matrix<T> grad_or_zero(ValueId id) const {
    const Node& n = nodes_[id.idx];
    if (n.grad.size() == 0) return Matrix<T>(n.value.rows, n.value.cols);
    return n.grad;
  }

 private:
  using BackFn = std::function<void(GradTape&, const Matrix<T>&)>;

  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    BackFn backward;
  };

  std::vector<Node> nodes_;

  ValueId record(Matrix<T> v, BackFn fn) {
    nodes_.push_back(Node{std::move(v), {}, std::move(fn)});
    return ValueId{nodes_.size() - 1};
  }

  void accumulate(ValueId id, const Matrix<T>& g) {
    Node& n = nodes_[id.idx];
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) n.grad.data[i] += g.data[i];
    }
  }

  /// Shared tail of batchnorm: out = xhat*scale + shift, with xhat and the
  /// per-column inverse stddev precomputed. through_stats selects the full
  /// train-mode backward (mean/var depend on x) vs the eval-mode one.
  ValueId affine_norm(ValueId x, ValueId scale_id, ValueId shift_id, Matrix<T> xhat_in,
                      std::vector<T> inv_in, bool through_stats) {
    auto xhat = std::make_shared<Matrix<T>>(std::move(xhat_in));
    auto inv = std::make_shared<std::vector<T>>(std::move(inv_in));
    const Matrix<T>& sc = value(scale_id);
    const Matrix<T>& sh = value(shift_id);
    Matrix<T> out(xhat->rows, xhat->cols);
    for (std::size_t i = 0; i < out.rows; ++i)
      for (std::size_t j = 0; j < out.cols; ++j)
        out(i, j) = (*xhat)(i, j) * sc(0, j) + sh(0, j);
    return record(std::move(out), [x, scale_id, shift_id, xhat, inv,
                                   through_stats](GradTape& t, const Matrix<T>& g) {
      const std::size_t n = g.rows, c = g.cols;
      const Matrix<T>& sc = t.value(scale_id);
      Matrix<T> gscale(1, c), gshift(1, c), gx(n, c);
      for (std::size_t j = 0; j < c; ++j) {
        T sum_g = T(0), sum_gx = T(0);
        for (std::size_t i = 0; i < n; ++i) {
          sum_g += g(i, j);
          sum_gx += g(i, j) * (*xhat)(i, j);
        }
        gshift(0, j) = sum_g;
        gscale(0, j) = sum_gx;
        const T s = sc(0, j) * (*inv)[j];
        if (through_stats) {
          // d/dx of ((x-mean)/std): subtract the batch-coupled terms
          for (std::size_t i = 0; i < n; ++i)
            gx(i, j) = s * (g(i, j) - sum_g / T(n) - (*xhat)(i, j) * sum_gx / T(n));
        } else {
          for (std::size_t i = 0; i < n; ++i) gx(i, j) = s * g(i, j);
        }
      }
      t.accumulate(x, gx);
      t.accumulate(scale_id, gscale);
      t.accumulate(shift_id, gshift);
    });
  }
};

}  // namespace gsdn
