// Command-line entry point: dataset generation/ingestion, training,
// evaluation, latency benchmarking, and experiment sweeps.

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gsdn/diagnostics.hpp"
#include "gsdn/graph_io.hpp"
#include "gsdn/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gsdn;

namespace {

constexpr const char* kToolVersion = "gsdn 0.1.0";

int thread_count_from_env() {
  if (const char* env = std::getenv("GSDN_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

/// Output directory: runs/<timestamp>-<confighash>/
fs::path make_run_dir(const fs::path& base, const std::string& hash) {
  char stamp[32];
  const std::time_t now = std::time(nullptr);
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", std::localtime(&now));
  fs::path dir = base / (std::string(stamp) + "-" + hash.substr(0, 12));
  fs::create_directories(dir);
  return dir;
}

void write_effective_config(const fs::path& dir, const TrainConfig& cfg,
                            const json& extra = {}) {
  json j = cfg;
  j["tool_version"] = kToolVersion;
  for (auto& [k, v] : extra.items()) j[k] = v;
  std::ofstream(dir / "config.json") << j.dump(2) << "\n";
}

TrainConfig load_config(const std::string& path) {
  TrainConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    cfg = json::parse(in).get<TrainConfig>();
  }
  return cfg;
}

std::vector<double> parse_range(const std::string& spec) {
  // "a:b:step" inclusive range, or comma-separated list
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    double a, b, step;
    if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &a, &b, &step) == 3) {
      for (double v = a; v <= b + 1e-12; v += step) out.push_back(v);
      return out;
    }
    std::size_t lo, hi;
    if (std::sscanf(spec.c_str(), "%zu:%zu", &lo, &hi) == 2) {
      for (std::size_t v = lo; v <= hi; ++v) out.push_back(static_cast<double>(v));
      return out;
    }
    throw config_error("bad range spec: " + spec);
  }
  std::istringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  return out;
}

std::vector<std::uint64_t> seed_list(std::uint64_t base, std::size_t n) {
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(base + i);
  return out;
}

// ---------------------------------------------------------------------------

int cmd_generate(std::size_t per_class, std::size_t classes, double p_in, double p_out,
                 std::size_t dim, double signal, std::uint64_t seed,
                 const std::string& out_dir) {
  auto [g, split] = generate_planted(per_class, classes, p_in, p_out, dim, signal, seed);
  save_dataset(g, split, out_dir);
  std::cout << "N=" << g.num_nodes() << " E=" << g.num_edges()
            << " homophily=" << edge_homophily(g) << "\n";
  return 0;
}

/// Citation-network raw import: a .content file (id <tab> features... <tab>
/// label) and a .cites file (id <tab> id). String ids and labels are mapped
/// to dense indices; splits follow the 20-per-class convention.
int cmd_ingest(const std::string& content_path, const std::string& cites_path,
               std::uint64_t seed, const std::string& out_dir) {
  std::ifstream content(content_path);
  if (!content) throw data_error("cannot open " + content_path);
  std::vector<std::vector<float>> feats;
  std::vector<std::string> raw_labels;
  std::map<std::string, NodeId> ids;
  std::string line;
  while (std::getline(content, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<std::string> toks;
    std::string tok;
    while (ss >> tok) toks.push_back(tok);
    if (toks.size() < 3) throw data_error("malformed content row");
    ids[toks.front()] = feats.size();
    std::vector<float> row;
    for (std::size_t i = 1; i + 1 < toks.size(); ++i) row.push_back(std::stof(toks[i]));
    feats.push_back(std::move(row));
    raw_labels.push_back(toks.back());
  }
  std::map<std::string, std::size_t> label_map;
  std::vector<std::size_t> labels;
  for (const auto& l : raw_labels) {
    auto [it, _] = label_map.try_emplace(l, label_map.size());
    labels.push_back(it->second);
  }
  Matrix<float> x(feats.size(), feats.front().size());
  for (std::size_t i = 0; i < feats.size(); ++i) {
    if (feats[i].size() != x.cols) throw data_error("ragged feature rows");
    std::copy(feats[i].begin(), feats[i].end(), x.row_ptr(i));
  }
  std::vector<Edge> edges;
  std::ifstream cites(cites_path);
  if (!cites) throw data_error("cannot open " + cites_path);
  std::string a, b;
  while (cites >> a >> b) {
    auto ia = ids.find(a), ib = ids.find(b);
    if (ia == ids.end() || ib == ids.end() || ia->second == ib->second) continue;
    edges.push_back({std::min(ia->second, ib->second), std::max(ia->second, ib->second)});
  }
  GraphDataset g(std::move(x), std::move(edges), std::move(labels), label_map.size());

  // 20-per-class train, 500 val, rest test
  Rng rng(seed);
  std::vector<NodeId> order(g.num_nodes());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  SplitMask split;
  std::vector<std::size_t> taken(g.num_classes(), 0);
  std::vector<NodeId> rest;
  for (NodeId v : order) {
    if (taken[g.labels()[v]] < 20) {
      split.train.push_back(v);
      ++taken[g.labels()[v]];
    } else {
      rest.push_back(v);
    }
  }
  const std::size_t nval = std::min<std::size_t>(500, rest.size() / 2);
  split.val.assign(rest.begin(), rest.begin() + nval);
  split.test.assign(rest.begin() + nval, rest.end());
  save_dataset(g, split, out_dir);
  std::cout << "N=" << g.num_nodes() << " E=" << g.num_edges() << " C=" << g.num_classes()
            << " d=" << g.num_features() << "\n";
  return 0;
}

int cmd_train(const std::string& dataset_dir, TrainConfig cfg, const std::string& mode,
              const std::string& out_base, bool grid, const std::string& grid_hidden,
              const std::string& grid_batch, const std::string& grid_lambda,
              std::size_t n_seeds) {
  auto [g, split] = load_dataset(dataset_dir);
  if (mode == "mlp") cfg = cfg.mlp_mode();
  cfg.validate();
  const std::string hash = config_hash(cfg);
  const fs::path dir = make_run_dir(out_base, hash);
  write_effective_config(dir, cfg, {{"mode", mode}, {"dataset", dataset_dir}});

  if (grid) {
    std::vector<std::size_t> hs, bs;
    for (double v : parse_range(grid_hidden)) hs.push_back(static_cast<std::size_t>(v));
    for (double v : parse_range(grid_batch)) bs.push_back(static_cast<std::size_t>(v));
    const auto lams = parse_range(grid_lambda);
    const auto res = grid_search(g, split, cfg, hs, bs, lams, seed_list(cfg.seed, n_seeds));
    write_grid_csv(res, dir / "grid.csv");
    std::ofstream(dir / "best_config.json") << json(res.best).dump(2) << "\n";
    std::cout << "grid table: " << (dir / "grid.csv").string() << "\n";
    return 0;
  }

  if (mode == "gcn") {
    const auto res = train_gcn_reference<float>(g, split, cfg);
    write_metrics_csv(res.report, dir / "metrics.csv");
    write_report_json(res.report, dir / "report.json");
    std::cout << "test_acc=" << res.report.test_acc << " run_dir=" << dir.string() << "\n";
    return 0;
  }

  const auto res = fit<float>(g, split, cfg);
  save_checkpoint(res.best_params, hash, dir / "checkpoint.json");
  write_metrics_csv(res.report, dir / "metrics.csv");
  write_report_json(res.report, dir / "report.json");
  std::cout << "test_acc=" << res.report.test_acc << " run_dir=" << dir.string() << "\n";
  return 0;
}

int cmd_evaluate(const std::string& dataset_dir, const std::string& checkpoint) {
  auto [g, split] = load_dataset(dataset_dir);
  auto [params, hash] = load_checkpoint<float>(checkpoint);
  if (params.d != g.num_features() || params.classes != g.num_classes())
    throw data_error("checkpoint dimensions do not match dataset");
  const auto& feats = g.features();
  std::cout << "train_acc=" << accuracy(params, feats, g.labels(), split.train)
            << " val_acc=" << accuracy(params, feats, g.labels(), split.val)
            << " test_acc=" << accuracy(params, feats, g.labels(), split.test)
            << " config_hash=" << hash << "\n";
  return 0;
}

int cmd_bench(const std::string& dataset_dir, const std::string& checkpoint,
              const std::string& layer_range, std::size_t reps, std::size_t hidden,
              const std::string& out_csv) {
  auto [g, split] = load_dataset(dataset_dir);
  (void)split;
  std::vector<std::size_t> layer_values;
  for (double v : parse_range(layer_range)) layer_values.push_back(static_cast<std::size_t>(v));
  const auto adj = NormalizedAdjacency<float>::build(g);
  const NodeId probe_node = 0;
  std::vector<BenchRow> rows;
  for (std::size_t layers : layer_values) {
    ModelParams<float> params;
    if (!checkpoint.empty() && layers == layer_values.front()) {
      std::string hash;
      std::tie(params, hash) = load_checkpoint<float>(checkpoint);
      if (params.d != g.num_features()) throw data_error("checkpoint/dataset dim mismatch");
    } else {
      params = init_params<float>(g.num_features(), hidden, layers, g.num_classes(), 1);
    }
    const auto gcn_params =
        init_gcn_params<float>(g.num_features(), hidden, layers, g.num_classes(), 1);
    const auto st_gsdn = bench_gsdn_latency(params, g, reps);
    const auto st_gcn = bench_gcn_latency(gcn_params, adj, g, reps);
    const auto tr_gsdn = count_fetches(g, probe_node, layers, /*gsdn_path=*/true);
    const auto tr_gcn = count_fetches(g, probe_node, layers);
    rows.push_back({"gsdn", dataset_dir, g.num_nodes(), g.num_edges(), layers,
                    params.hidden, st_gsdn.median_ms, st_gsdn.iqr_ms, reps,
                    st_gsdn.threads, tr_gsdn.total_unique});
    rows.push_back({"gcn", dataset_dir, g.num_nodes(), g.num_edges(), layers, hidden,
                    st_gcn.median_ms, st_gcn.iqr_ms, reps, st_gcn.threads,
                    tr_gcn.total_unique});
  }
  write_bench_csv(rows, out_csv);
  std::cout << "wrote " << rows.size() << " rows to " << out_csv << "\n";
  return 0;
}

int cmd_experiment(const std::string& name, const std::string& dataset_dir,
                   TrainConfig cfg, const std::string& ratios_spec,
                   const std::string& k_spec, std::size_t n_seeds,
                   const std::string& out_base) {
  auto [g, split] = load_dataset(dataset_dir);
  cfg.validate();
  const fs::path dir = make_run_dir(out_base, config_hash(cfg));
  write_effective_config(dir, cfg, {{"experiment", name}, {"dataset", dataset_dir}});
  const auto seeds = seed_list(cfg.seed, n_seeds);
  json index{{"experiment", name},
             {"dataset", dataset_dir},
             {"config_hash", config_hash(cfg)},
             {"tool_version", kToolVersion},
             {"files", json::array()}};

  if (name == "noise") {
    const auto table = run_noise_sweep(g, split, cfg, parse_range(ratios_spec),
                                       {"gsdn", "mlp", "gcn"}, seeds);
    write_sweep_csv(table, dir / "noise.csv");
    index["files"].push_back("noise.csv");
  } else if (name == "scarcity") {
    std::vector<std::size_t> ks;
    for (double v : parse_range(k_spec)) ks.push_back(static_cast<std::size_t>(v));
    const auto table =
        run_label_scarcity_sweep(g, split, cfg, ks, {"gsdn", "mlp", "gcn"}, seeds);
    write_sweep_csv(table, dir / "scarcity.csv");
    index["files"].push_back("scarcity.csv");
  } else if (name == "ablation") {
    const auto table = run_ablations(g, split, cfg, seeds);
    write_sweep_csv(table, dir / "ablation.csv");
    index["files"].push_back("ablation.csv");
  } else if (name == "sensitivity") {
    const auto res = grid_search(g, split, cfg, {cfg.hidden},
                                 {256, 512, 1024, 2048, 4096},
                                 {0.0, 0.1, 0.3, 0.5, 0.8, 1.0}, seeds);
    write_grid_csv(res, dir / "sensitivity.csv");
    index["files"].push_back("sensitivity.csv");
  } else {
    std::cerr << "unknown experiment '" << name
              << "'; valid names: noise, scarcity, ablation, sensitivity\n";
    return 2;
  }
  std::ofstream(dir / "index.json") << index.dump(2) << "\n";
  std::cout << "results in " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph self-distillation on neighborhood: train GNN-level accuracy "
               "into an MLP and benchmark its inference"};
  app.require_subcommand(1);
  set_kernel_threads(thread_count_from_env());

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a planted-partition dataset");
  std::size_t per_class = 200, classes = 3, dim = 32;
  double p_in = 0.05, p_out = 0.005, signal = 1.0;
  std::uint64_t gseed = 1;
  std::string gen_out = "dataset";
  gen->add_option("--per-class", per_class);
  gen->add_option("--classes", classes);
  gen->add_option("--p-in", p_in);
  gen->add_option("--p-out", p_out);
  gen->add_option("--dim", dim);
  gen->add_option("--signal", signal);
  gen->add_option("--seed", gseed);
  gen->add_option("--out", gen_out)->required();

  // ingest
  auto* ing = app.add_subcommand("ingest", "Import a citation-network raw dump");
  std::string content_path, cites_path, ing_out = "dataset";
  std::uint64_t iseed = 1;
  ing->add_option("--content", content_path)->required();
  ing->add_option("--cites", cites_path)->required();
  ing->add_option("--seed", iseed);
  ing->add_option("--out", ing_out)->required();

  // train
  auto* tr = app.add_subcommand("train", "Train GSDN / MLP / GCN on a dataset");
  std::string dataset_dir, config_path, mode = "gsdn", out_base = "runs";
  TrainConfig defaults;
  double lr = defaults.lr, wd = defaults.weight_decay, lambda = defaults.lambda,
         dropout_p = defaults.dropout;
  std::size_t epochs = defaults.epochs, layers = defaults.layers,
              hidden = defaults.hidden, batch = defaults.batch_size,
              k_neg = defaults.k_negatives;
  std::uint64_t seed = defaults.seed;
  std::string neg_dist = "uniform";
  bool no_ns = false, no_mix = false, no_ld = false, grid = false;
  std::string grid_hidden = "64", grid_batch = "512", grid_lambda = "0.5,0.8,1.0";
  std::size_t n_seeds = 5;
  tr->add_option("--dataset", dataset_dir)->required();
  tr->add_option("--config", config_path);
  tr->add_option("--mode", mode)->check(CLI::IsMember({"gsdn", "mlp", "gcn"}));
  tr->add_option("--lr", lr);
  tr->add_option("--weight-decay", wd);
  tr->add_option("--epochs", epochs);
  tr->add_option("--layers", layers);
  tr->add_option("--hidden", hidden);
  tr->add_option("--batch-size", batch);
  tr->add_option("--lambda", lambda);
  tr->add_option("--dropout", dropout_p);
  tr->add_option("--k-negatives", k_neg);
  tr->add_option("--negative-dist", neg_dist)->check(CLI::IsMember({"uniform", "degree"}));
  tr->add_option("--seed", seed);
  tr->add_flag("--no-negative-samples", no_ns);
  tr->add_flag("--no-mixup", no_mix);
  tr->add_flag("--no-label-distill", no_ld);
  tr->add_flag("--grid", grid);
  tr->add_option("--grid-hidden", grid_hidden);
  tr->add_option("--grid-batch", grid_batch);
  tr->add_option("--grid-lambda", grid_lambda);
  tr->add_option("--seeds", n_seeds);
  tr->add_option("--out", out_base);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
  std::string ev_dataset, ev_ckpt;
  ev->add_option("--dataset", ev_dataset)->required();
  ev->add_option("--checkpoint", ev_ckpt)->required();

  // bench
  auto* be = app.add_subcommand("bench", "Latency and fetch-count benchmark");
  std::string be_dataset, be_ckpt, be_layers = "1:4", be_out = "bench.csv";
  std::size_t be_reps = 30, be_hidden = 16;
  be->add_option("--dataset", be_dataset)->required();
  be->add_option("--checkpoint", be_ckpt);
  be->add_option("--layers", be_layers);
  be->add_option("--reps", be_reps);
  be->add_option("--hidden", be_hidden);
  be->add_option("--out", be_out);

  // experiment
  auto* ex = app.add_subcommand("experiment", "Run a sweep (noise|scarcity|ablation|sensitivity)");
  std::string ex_name, ex_dataset, ex_config, ex_ratios = "0:0.6:0.1", ex_k = "5,10,15",
              ex_out = "runs";
  std::size_t ex_seeds = 5;
  std::size_t ex_epochs = 0;
  ex->add_option("name", ex_name)->required();
  ex->add_option("--dataset", ex_dataset)->required();
  ex->add_option("--config", ex_config);
  ex->add_option("--ratios", ex_ratios);
  ex->add_option("--k-values", ex_k);
  ex->add_option("--seeds", ex_seeds);
  ex->add_option("--epochs", ex_epochs);
  ex->add_option("--out", ex_out);

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_generate(per_class, classes, p_in, p_out, dim, signal,
                                           gseed, gen_out);
    if (ing->parsed()) return cmd_ingest(content_path, cites_path, iseed, ing_out);
    if (tr->parsed()) {
      TrainConfig cfg = load_config(config_path);
      // CLI flags override config-file values only when explicitly given
      if (tr->count("--lr")) cfg.lr = lr;
      if (tr->count("--weight-decay")) cfg.weight_decay = wd;
      if (tr->count("--epochs")) cfg.epochs = epochs;
      if (tr->count("--layers")) cfg.layers = layers;
      if (tr->count("--hidden")) cfg.hidden = hidden;
      if (tr->count("--batch-size")) cfg.batch_size = batch;
      if (tr->count("--lambda")) cfg.lambda = lambda;
      if (tr->count("--dropout")) cfg.dropout = dropout_p;
      if (tr->count("--k-negatives")) cfg.k_negatives = k_neg;
      if (tr->count("--negative-dist"))
        cfg.negative_dist = neg_dist == "degree" ? NegativeKind::degree : NegativeKind::uniform;
      if (tr->count("--seed")) cfg.seed = seed;
      if (no_ns) cfg.ablation.no_negative_samples = true;
      if (no_mix) cfg.ablation.no_mixup = true;
      if (no_ld) cfg.ablation.no_label_distill = true;
      cfg.threads = thread_count_from_env();
      return cmd_train(dataset_dir, cfg, mode, out_base, grid, grid_hidden, grid_batch,
                       grid_lambda, n_seeds);
    }
    if (ev->parsed()) return cmd_evaluate(ev_dataset, ev_ckpt);
    if (be->parsed()) return cmd_bench(be_dataset, be_ckpt, be_layers, be_reps, be_hidden,
                                       be_out);
    if (ex->parsed()) {
      TrainConfig cfg = load_config(ex_config);
      if (ex_epochs > 0) cfg.epochs = ex_epochs;
      cfg.threads = thread_count_from_env();
      return cmd_experiment(ex_name, ex_dataset, cfg, ex_ratios, ex_k, ex_seeds, ex_out);
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
