#include <catch2/catch_amalgamated.hpp>

#include "gsdn/bench.hpp"
#include "gsdn/gcn.hpp"
#include "gsdn/graph.hpp"

using namespace gsdn;

namespace {

GraphDataset path3() {
  Matrix<float> x(3, 2, 1.0f);
  return GraphDataset(std::move(x), {{0, 1}, {1, 2}}, {0, 1, 0}, 2);
}

/// Petersen graph: 3-regular on 10 nodes with girth 5, so the 2-hop
/// neighborhoods contain no shortcuts: 1 + 3 + 3*2 unique nodes.
GraphDataset petersen() {
  Matrix<float> x(10, 2, 1.0f);
  std::vector<Edge> e{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4},   // outer cycle
                      {5, 7}, {7, 9}, {6, 9}, {6, 8}, {5, 8},   // inner star
                      {0, 5}, {1, 6}, {2, 7}, {3, 8}, {4, 9}};  // spokes
  return GraphDataset(std::move(x), std::move(e), std::vector<std::size_t>(10, 0), 1);
}

}  // namespace

TEST_CASE("normalized adjacency entries are 1/sqrt((d_i+1)(d_j+1))") {
  auto g = path3();  // degrees 1, 2, 1
  auto a = NormalizedAdjacency<double>::build(g);
  REQUIRE(a.num_rows() == 3);
  // row 0: (0,0) = 1/2, (0,1) = 1/sqrt(6)
  REQUIRE(a.row_ptr[1] - a.row_ptr[0] == 2);
  CHECK(a.col_idx[0] == 0);
  CHECK(a.vals[0] == Catch::Approx(0.5));
  CHECK(a.col_idx[1] == 1);
  CHECK(a.vals[1] == Catch::Approx(1.0 / std::sqrt(6.0)));
  // row 1: (1,0), (1,1) = 1/3, (1,2)
  REQUIRE(a.row_ptr[2] - a.row_ptr[1] == 3);
  CHECK(a.col_idx[a.row_ptr[1] + 1] == 1);
  CHECK(a.vals[a.row_ptr[1] + 1] == Catch::Approx(1.0 / 3.0));
  // columns sorted within each row
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t e = a.row_ptr[i] + 1; e < a.row_ptr[i + 1]; ++e)
      CHECK(a.col_idx[e - 1] < a.col_idx[e]);
  // rows of A_hat for a connected pair are symmetric entries
  CHECK(a.vals[1] == Catch::Approx(a.vals[a.row_ptr[1]]));
}

TEST_CASE("gcn forward matches a dense-matrix oracle") {
  auto [g, split] = generate_planted(8, 2, 0.5, 0.2, 4, 1.0, 7);
  auto adj = NormalizedAdjacency<double>::build(g);
  auto p = init_gcn_params<double>(4, 6, 2, 2, 3);
  const Matrix<double> x = g.features().cast<double>();

  // dense A_hat
  const std::size_t n = g.num_nodes();
  Matrix<double> dense(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t e = adj.row_ptr[i]; e < adj.row_ptr[i + 1]; ++e)
      dense(i, adj.col_idx[e]) = adj.vals[e];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) CHECK(dense(i, j) == Catch::Approx(dense(j, i)));

  Matrix<double> h = x;
  for (std::size_t l = 0; l < p.w.size(); ++l) {
    h = matmul(matmul(dense, h), p.w[l]);
    if (l + 1 < p.w.size()) h = relu(h);
  }
  Matrix<double> oracle = matmul(h, p.wc);
  for (std::size_t i = 0; i < oracle.rows; ++i)
    for (std::size_t j = 0; j < oracle.cols; ++j) oracle(i, j) += p.bc(0, j);

  const Matrix<double> lib = gcn_forward(p, adj, x);
  REQUIRE(lib.same_shape(oracle));
  for (std::size_t i = 0; i < lib.size(); ++i)
    CHECK(lib.data[i] == Catch::Approx(oracle.data[i]).margin(1e-6));
}

TEST_CASE("on an edgeless graph the gcn degenerates to a per-row mlp") {
  Matrix<float> xf(5, 3);
  Rng rng(2);
  for (float& v : xf.data) v = static_cast<float>(rng.uniform(-1, 1));
  GraphDataset g(std::move(xf), {}, std::vector<std::size_t>(5, 0), 1);
  auto adj = NormalizedAdjacency<double>::build(g);
  auto p = init_gcn_params<double>(3, 4, 2, 2, 9);
  const Matrix<double> x = g.features().cast<double>();
  const Matrix<double> full = gcn_forward(p, adj, x);
  // row-by-row: a single-node graph with the same weights gives the same row
  for (std::size_t i = 0; i < 5; ++i) {
    Matrix<float> one(1, 3);
    for (std::size_t j = 0; j < 3; ++j) one(0, j) = g.features()(i, j);
    GraphDataset g1(std::move(one), {}, {0}, 1);
    auto adj1 = NormalizedAdjacency<double>::build(g1);
    const Matrix<double> row = gcn_forward(p, adj1, g1.features().cast<double>());
    for (std::size_t j = 0; j < row.cols; ++j)
      CHECK(row(0, j) == Catch::Approx(full(i, j)).margin(1e-9));
  }
}

TEST_CASE("taped gcn gradients pass finite differences") {
  auto [g, split] = generate_planted(5, 2, 0.6, 0.2, 3, 1.0, 5);
  auto adj = NormalizedAdjacency<double>::build(g);
  auto p = init_gcn_params<double>(3, 4, 2, 2, 11);
  const Matrix<double> x = g.features().cast<double>();
  std::vector<std::size_t> train_labels;
  for (NodeId v : split.train) train_labels.push_back(g.labels()[v]);

  auto loss_value = [&] {
    GradTape<double> tape;
    auto m = TapedGcn<double>::attach(tape, p, adj);
    auto logits = m.forward(tape.leaf(x));
    return static_cast<double>(
        tape.value(tape.mean(tape.ce_rows(tape.gather_rows(logits, split.train),
                                          train_labels)))(0, 0));
  };
  GradTape<double> tape;
  auto m = TapedGcn<double>::attach(tape, p, adj);
  auto logits = m.forward(tape.leaf(x));
  auto loss = tape.mean(tape.ce_rows(tape.gather_rows(logits, split.train), train_labels));
  tape.backward(loss);
  auto grads = m.gradients();
  auto tensors = p.trainable();
  REQUIRE(grads.size() == tensors.size());
  const double h = 1e-6;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    Matrix<double>& w = *tensors[t];
    for (std::size_t i = 0; i < w.size(); i += std::max<std::size_t>(1, w.size() / 3)) {
      const double orig = w.data[i];
      w.data[i] = orig + h;
      const double up = loss_value();
      w.data[i] = orig - h;
      const double down = loss_value();
      w.data[i] = orig;
      const double fd = (up - down) / (2 * h);
      const double an = grads[t].data[i];
      CHECK(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-4}) < 1e-4);
    }
  }
}

TEST_CASE("fetch counting on canonical fixtures") {
  SECTION("depth zero fetches only the target") {
    auto g = petersen();
    auto tr = count_fetches(g, 0, 0);
    CHECK(tr.per_layer == std::vector<std::size_t>{1});
    CHECK(tr.total_unique == 1);
  }
  SECTION("star hub at depth 1 fetches 1 + R") {
    Matrix<float> x(6, 1, 0.0f);
    GraphDataset star(std::move(x), {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5}},
                      std::vector<std::size_t>(6, 0), 1);
    auto hub = count_fetches(star, 0, 1);
    CHECK(hub.total_unique == 6);
    // a leaf at depth 2 reaches the hub then every other leaf
    auto leaf = count_fetches(star, 1, 2);
    CHECK(leaf.per_layer == std::vector<std::size_t>{1, 2, 6});
  }
  SECTION("R-regular fixture at depth 2 fetches 1 + R + R(R-1)") {
    auto g = petersen();
    const std::size_t R = 3;
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
      auto tr = count_fetches(g, v, 2);
      REQUIRE(tr.per_layer.size() == 3);
      CHECK(tr.per_layer[0] == 1);
      CHECK(tr.per_layer[1] == 1 + R);
      CHECK(tr.per_layer[2] == 1 + R + R * (R - 1));
    }
  }
  SECTION("the feature-only inference path fetches one node at any depth") {
    auto g = petersen();
    auto tr = count_fetches(g, 4, 3, /*gsdn_path=*/true);
    CHECK(tr.per_layer == std::vector<std::size_t>{1, 1, 1, 1});
    CHECK(tr.total_unique == 1);
  }
  SECTION("invalid target is rejected") {
    auto g = petersen();
    CHECK_THROWS_AS(count_fetches(g, 99, 2), data_error);
  }
}

TEST_CASE("latency harness contracts") {
  auto [g, split] = generate_planted(10, 2, 0.4, 0.1, 6, 1.0, 3);
  auto p = init_params<float>(6, 8, 2, 2, 1);
  CHECK_THROWS_AS(bench_gsdn_latency(p, g, 4), config_error);
  const auto before = g.adjacency_reads();
  auto st = bench_gsdn_latency(p, g, 5, 1);
  CHECK(st.reps == 5);
  CHECK(st.samples_ms.size() == 5);
  CHECK(st.median_ms >= 0.0);
  CHECK(st.iqr_ms >= 0.0);
  CHECK(g.adjacency_reads() == before);  // inference never touched adjacency

  auto gp = init_gcn_params<float>(6, 8, 2, 2, 1);
  auto adj = NormalizedAdjacency<float>::build(g);
  CHECK_THROWS_AS(bench_gcn_latency(gp, adj, g, 2), config_error);
  auto st2 = bench_gcn_latency(gp, adj, g, 5, 1);
  CHECK(st2.samples_ms.size() == 5);
}

TEST_CASE("linear fit r-squared") {
  std::vector<double> xs{1, 2, 3, 4};
  CHECK(linear_fit_r2(xs, {2, 4, 6, 8}) == Catch::Approx(1.0));
  CHECK(linear_fit_r2(xs, {5, 5, 5, 5}) == Catch::Approx(1.0));  // flat is linear
  CHECK(linear_fit_r2(xs, {1, 8, 2, 9}) < 0.95);
}
