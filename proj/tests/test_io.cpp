#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gsdn/io.hpp"

using namespace gsdn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path tmp_file(const std::string& name) {
  fs::path d = fs::temp_directory_path() / "gsdn-io-tests";
  fs::create_directories(d);
  return d / name;
}

}  // namespace

TEST_CASE("checkpoint round-trip preserves every tensor") {
  auto p = init_params<float>(5, 6, 2, 3, 13);
  // make the running stats non-default so the round-trip covers them too
  p.layers[0].bn.running_mean[0] = 0.25f;
  p.layers[1].bn.running_var[2] = 4.0f;
  const auto path = tmp_file("ckpt.json");
  save_checkpoint(p, "deadbeefdeadbeef", path);
  auto [q, hash] = load_checkpoint<float>(path);
  CHECK(hash == "deadbeefdeadbeef");
  CHECK(q.d == p.d);
  CHECK(q.hidden == p.hidden);
  CHECK(q.layers_n == p.layers_n);
  CHECK(q.classes == p.classes);
  REQUIRE(q.layers.size() == p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    CHECK(q.layers[l].w.data == p.layers[l].w.data);
    CHECK(q.layers[l].bn_scale.data == p.layers[l].bn_scale.data);
    CHECK(q.layers[l].bn_shift.data == p.layers[l].bn_shift.data);
    CHECK(q.layers[l].bn.running_mean == p.layers[l].bn.running_mean);
    CHECK(q.layers[l].bn.running_var == p.layers[l].bn.running_var);
  }
  CHECK(q.wf.data == p.wf.data);
  CHECK(q.bf.data == p.bf.data);
  CHECK(q.wg.data == p.wg.data);
  CHECK(q.bg.data == p.bg.data);
  CHECK(q.wm.data == p.wm.data);
  CHECK(q.attn.data == p.attn.data);
  // the restored model predicts identically
  Rng rng(1);
  Matrix<float> x(4, 5);
  for (float& v : x.data) v = static_cast<float>(rng.uniform(-1, 1));
  CHECK(predict(p, x) == predict(q, x));
}

TEST_CASE("checkpoint loading rejects corrupted dimension metadata") {
  auto p = init_params<float>(5, 6, 2, 3, 14);
  const auto path = tmp_file("ckpt-bad.json");
  save_checkpoint(p, "h", path);

  SECTION("declared hidden width disagrees with the tensors") {
    nlohmann::json j = nlohmann::json::parse(slurp(path));
    j["hidden"] = 7;
    std::ofstream(path) << j.dump();
    CHECK_THROWS_AS(load_checkpoint<float>(path), data_error);
  }
  SECTION("tensor payload shorter than rows*cols") {
    nlohmann::json j = nlohmann::json::parse(slurp(path));
    j["head_f"]["w"]["data"] = std::vector<float>{1.0f, 2.0f};
    std::ofstream(path) << j.dump();
    CHECK_THROWS_AS(load_checkpoint<float>(path), data_error);
  }
  SECTION("unknown format tag") {
    nlohmann::json j = nlohmann::json::parse(slurp(path));
    j["format"] = "something-else";
    std::ofstream(path) << j.dump();
    CHECK_THROWS_AS(load_checkpoint<float>(path), data_error);
  }
  SECTION("missing file") {
    CHECK_THROWS_AS(load_checkpoint<float>(tmp_file("nonexistent.json")), data_error);
  }
}

TEST_CASE("metrics CSV is byte-identical across identically seeded runs") {
  auto [g, split] = generate_planted(15, 2, 0.4, 0.1, 6, 1.5, 51, 5, 5);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.hidden = 8;
  cfg.batch_size = 64;
  cfg.seed = 9;
  auto r1 = fit<float>(g, split, cfg);
  auto r2 = fit<float>(g, split, cfg);
  const auto p1 = tmp_file("metrics1.csv");
  const auto p2 = tmp_file("metrics2.csv");
  write_metrics_csv(r1.report, p1);
  write_metrics_csv(r2.report, p2);
  const std::string s1 = slurp(p1);
  CHECK(s1 == slurp(p2));
  CHECK(s1.rfind("epoch,feat_loss,label_loss,total_loss,val_acc\n", 0) == 0);
  // timings deliberately live in the JSON report, not the CSV
  CHECK(s1.find("seconds") == std::string::npos);
  const auto pj = tmp_file("report.json");
  write_report_json(r1.report, pj);
  const auto rep = nlohmann::json::parse(slurp(pj));
  CHECK(rep.at("epochs").size() == cfg.epochs);
  CHECK(rep.at("epochs")[0].contains("seconds"));
  CHECK(rep.at("config_hash") == config_hash(cfg));
  CHECK(rep.at("environment").at("threads") == cfg.threads);
}

TEST_CASE("sweep, bench, grid, and similarity CSV layouts") {
  SweepTable t;
  t.experiment = "noise";
  t.rows = {{"gsdn", 0.2, 1, 0.875}};
  const auto ps = tmp_file("sweep.csv");
  write_sweep_csv(t, ps);
  CHECK(slurp(ps) == "experiment,model,x,seed,test_acc\nnoise,gsdn,0.2,1,0.875\n");

  BenchRow row;
  row.model = "gsdn";
  row.dataset = "planted";
  row.num_nodes = 100;
  row.num_edges = 500;
  row.layers = 2;
  row.hidden = 16;
  row.median_ms = 1.5;
  row.iqr_ms = 0.25;
  row.reps = 20;
  row.threads = 1;
  row.fetched_nodes = 1;
  const auto pb = tmp_file("bench.csv");
  write_bench_csv({row}, pb);
  CHECK(slurp(pb) ==
        "model,dataset,N,E,L,F,median_ms,iqr_ms,reps,threads,fetched_nodes\n"
        "gsdn,planted,100,500,2,16,1.5,0.25,20,1,1\n");

  GridResult grid;
  GridCell cell;
  cell.hidden = 64;
  cell.batch_size = 512;
  cell.lambda = 0.5;
  cell.mean_val = 0.9;
  cell.std_val = 0.01;
  cell.mean_test = 0.88;
  cell.std_test = 0.02;
  grid.table.push_back(cell);
  const auto pg = tmp_file("grid.csv");
  write_grid_csv(grid, pg);
  CHECK(slurp(pg) ==
        "hidden,batch_size,lambda,mean_val,std_val,mean_test,std_test\n"
        "64,512,0.5,0.9,0.01,0.88,0.02\n");

  SimilarityCurve curve;
  curve.epochs = {1, 10};
  curve.hop1 = {0.5, 0.75};
  curve.hop2 = {0.4, 0.5};
  const auto pc = tmp_file("sim.csv");
  write_similarity_csv(curve, pc);
  CHECK(slurp(pc) == "epoch,hop1_cosine,hop2_cosine\n1,0.5,0.4\n10,0.75,0.5\n");
}
