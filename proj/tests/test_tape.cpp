#include <catch2/catch_amalgamated.hpp>

#include "fd_check.hpp"
#include "gsdn/tape.hpp"

using namespace gsdn;
using gsdn::testing::fd_compare;

namespace {

Matrix<double> random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix<double> m(r, c);
  for (double& v : m.data) v = rng.uniform(-1, 1);
  return m;
}

}  // namespace

TEST_CASE("closed-form gradients: sq_l2 and softmax-CE") {
  Rng rng(17);
  Matrix<double> u = random_matrix(1, 4, rng);
  Matrix<double> v = random_matrix(1, 4, rng);
  {
    GradTape<double> tape;
    auto ui = tape.leaf(u);
    auto vi = tape.leaf(v);
    auto d = tape.sum(tape.rowwise_sqdist(ui, vi));
    tape.backward(d);
    const auto& gu = tape.grad(ui);
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(gu(0, j) == Catch::Approx(2.0 * (u(0, j) - v(0, j))).margin(1e-12));
  }
  {
    GradTape<double> tape;
    auto li = tape.leaf(u);
    auto ce = tape.sum(tape.ce_rows(li, {2}));
    tape.backward(ce);
    const auto sm = row_softmax(u);
    const auto& g = tape.grad(li);
    for (std::size_t j = 0; j < 4; ++j) {
      const double expect = sm(0, j) - (j == 2 ? 1.0 : 0.0);
      CHECK(g(0, j) == Catch::Approx(expect).margin(1e-12));
    }
  }
}

TEST_CASE("finite-difference check per primitive") {
  Rng rng(23);
  const double kBound = 1e-4;

  SECTION("matmul chain with relu") {
    Matrix<double> w = random_matrix(4, 3, rng);
    Matrix<double> x = random_matrix(5, 4, rng);
    auto eval = [&] {
      GradTape<double> t;
      return t.value(t.sum(t.relu(t.matmul(t.leaf(x), t.leaf(w)))))(0, 0);
    };
    GradTape<double> t;
    auto wi = t.leaf(w);
    auto loss = t.sum(t.relu(t.matmul(t.leaf(x), wi)));
    t.backward(loss);
    auto rep = fd_compare(w, t.grad(wi), eval);
    CHECK(rep.max_rel_err < kBound);
  }

  SECTION("sigmoid + matvec + concat") {
    Matrix<double> a = random_matrix(6, 1, rng);
    Matrix<double> x = random_matrix(7, 3, rng);
    auto build = [&](GradTape<double>& t, ValueId ai) {
      auto xi = t.leaf(x);
      auto cat = t.concat_cols(xi, xi);
      return t.sum(t.sigmoid(t.matvec(cat, ai)));
    };
    auto eval = [&] {
      GradTape<double> t;
      auto ai = t.leaf(a);
      return t.value(build(t, ai))(0, 0);
    };
    GradTape<double> t;
    auto ai = t.leaf(a);
    auto loss = build(t, ai);
    t.backward(loss);
    auto rep = fd_compare(a, t.grad(ai), eval);
    CHECK(rep.max_rel_err < kBound);
  }

  SECTION("batchnorm train mode, through batch statistics") {
    Matrix<double> x = random_matrix(9, 3, rng);
    Matrix<double> scale = random_matrix(1, 3, rng);
    Matrix<double> shift = random_matrix(1, 3, rng);
    auto run = [&](GradTape<double>& t, ValueId xi, ValueId sci, ValueId shi) {
      BnStats<double> st(3);
      auto bn = t.batchnorm(xi, sci, shi, st, Mode::train);
      // square so the gradient reaches every path
      auto sq = t.rowwise_sqdist(bn, t.leaf(Matrix<double>(9, 3)));
      return t.sum(sq);
    };
    GradTape<double> t;
    auto xi = t.leaf(x);
    auto sci = t.leaf(scale);
    auto shi = t.leaf(shift);
    t.backward(run(t, xi, sci, shi));
    auto eval = [&] {
      GradTape<double> t2;
      auto xi2 = t2.leaf(x);
      auto sc2 = t2.leaf(scale);
      auto sh2 = t2.leaf(shift);
      return t2.value(run(t2, xi2, sc2, sh2))(0, 0);
    };
    CHECK(fd_compare(x, t.grad(xi), eval).max_rel_err < kBound);
    CHECK(fd_compare(scale, t.grad(sci), eval).max_rel_err < kBound);
    CHECK(fd_compare(shift, t.grad(shi), eval).max_rel_err < kBound);
  }

  SECTION("row_mix and row_softmax") {
    Matrix<double> hi = random_matrix(4, 3, rng);
    Matrix<double> hj = random_matrix(4, 3, rng);
    Matrix<double> beta_src = random_matrix(4, 1, rng);
    auto build = [&](GradTape<double>& t, ValueId hii) {
      auto hji = t.leaf(hj);
      auto beta = t.sigmoid(t.leaf(beta_src));
      auto mix = t.row_mix(hii, hji, beta);
      return t.sum(t.row_softmax(mix));
    };
    // softmax rows sum to one, so perturb through a distance instead
    auto build2 = [&](GradTape<double>& t, ValueId hii) {
      auto hji = t.leaf(hj);
      auto beta = t.sigmoid(t.leaf(beta_src));
      auto mix = t.row_mix(hii, hji, beta);
      auto sm = t.row_softmax(mix);
      return t.sum(t.rowwise_sqdist(sm, t.leaf(Matrix<double>(4, 3, 0.1))));
    };
    (void)build;
    GradTape<double> t;
    auto hii = t.leaf(hi);
    t.backward(build2(t, hii));
    auto eval = [&] {
      GradTape<double> t2;
      auto h2 = t2.leaf(hi);
      return t2.value(build2(t2, h2))(0, 0);
    };
    CHECK(fd_compare(hi, t.grad(hii), eval).max_rel_err < kBound);
  }

  SECTION("gather_rows with repeated indices") {
    Matrix<double> x = random_matrix(5, 3, rng);
    std::vector<std::size_t> idx{0, 2, 2, 4, 1};
    auto build = [&](GradTape<double>& t, ValueId xi) {
      return t.sum(t.rowwise_sqdist(t.gather_rows(xi, idx),
                                    t.leaf(Matrix<double>(5, 3, 0.3))));
    };
    GradTape<double> t;
    auto xi = t.leaf(x);
    t.backward(build(t, xi));
    auto eval = [&] {
      GradTape<double> t2;
      auto x2 = t2.leaf(x);
      return t2.value(build(t2, x2))(0, 0);
    };
    CHECK(fd_compare(x, t.grad(xi), eval).max_rel_err < kBound);
  }

  SECTION("spmm_symmetric") {
    // 3-node path graph with self-loops, symmetric weights
    std::vector<std::size_t> rp{0, 2, 5, 7};
    std::vector<std::size_t> ci{0, 1, 0, 1, 2, 1, 2};
    std::vector<double> vals{0.5, 0.4, 0.4, 0.3, 0.4, 0.4, 0.5};
    Matrix<double> h = random_matrix(3, 2, rng);
    auto build = [&](GradTape<double>& t, ValueId hi) {
      return t.sum(t.rowwise_sqdist(t.spmm_symmetric(rp, ci, vals, hi),
                                    t.leaf(Matrix<double>(3, 2, 0.2))));
    };
    GradTape<double> t;
    auto hi2 = t.leaf(h);
    t.backward(build(t, hi2));
    auto eval = [&] {
      GradTape<double> t2;
      auto h2 = t2.leaf(h);
      return t2.value(build(t2, h2))(0, 0);
    };
    CHECK(fd_compare(h, t.grad(hi2), eval).max_rel_err < kBound);
  }
}

TEST_CASE("dropout on tape rescales surviving entries") {
  Rng rng(31);
  Matrix<double> x(10, 10, 1.0);
  GradTape<double> t;
  auto xi = t.leaf(x);
  auto d = t.dropout(xi, 0.5, Mode::train, rng);
  const auto& dv = t.value(d);
  for (double v : dv.data) CHECK((v == 0.0 || v == 2.0));
  t.backward(t.sum(d));
  const auto& g = t.grad(xi);
  for (std::size_t i = 0; i < dv.size(); ++i)
    CHECK(g.data[i] == (dv.data[i] == 0.0 ? 0.0 : 2.0));
}

TEST_CASE("backward requires a scalar loss") {
  GradTape<double> t;
  auto a = t.leaf(Matrix<double>(2, 2, 1.0));
  CHECK_THROWS_AS(t.backward(a), dim_error);
}

TEST_CASE("untouched parameter has zero-shaped gradient") {
  GradTape<double> t;
  auto used = t.leaf(Matrix<double>(1, 2, 1.0));
  auto unused = t.leaf(Matrix<double>(3, 4, 1.0));
  t.backward(t.sum(used));
  const auto g = t.grad_or_zero(unused);
  CHECK(g.rows == 3);
  CHECK(g.cols == 4);
  for (double v : g.data) CHECK(v == 0.0);
}
