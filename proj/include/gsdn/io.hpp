#pragma once

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "gsdn/bench.hpp"
#include "gsdn/diagnostics.hpp"
#include "gsdn/training.hpp"

namespace gsdn {

namespace detail {

template <typename T>
nlohmann::json matrix_to_json(const Matrix<T>& m) {
  return {{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

template <typename T>
Matrix<T> matrix_from_json(const nlohmann::json& j) {
  Matrix<T> m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  m.data = j.at("data").get<std::vector<T>>();
  if (m.data.size() != m.rows * m.cols) throw data_error("checkpoint: matrix size mismatch");
  return m;
}

}  // namespace detail

/// Self-describing checkpoint: every ModelParams field plus the model
/// dimensions and the config hash of the run that produced it.
template <typename T>
void save_checkpoint(const ModelParams<T>& p, const std::string& cfg_hash,
                     const std::filesystem::path& path) {
  nlohmann::json j{{"format", "gsdn-checkpoint-v1"},
                   {"d", p.d},
                   {"hidden", p.hidden},
                   {"layers", p.layers_n},
                   {"classes", p.classes},
                   {"config_hash", cfg_hash}};
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : p.layers)
    layers.push_back({{"w", detail::matrix_to_json(l.w)},
                      {"bn_scale", detail::matrix_to_json(l.bn_scale)},
                      {"bn_shift", detail::matrix_to_json(l.bn_shift)},
                      {"bn_running_mean", l.bn.running_mean},
                      {"bn_running_var", l.bn.running_var}});
  j["backbone"] = layers;
  j["head_f"] = {{"w", detail::matrix_to_json(p.wf)}, {"b", detail::matrix_to_json(p.bf)}};
  j["head_g"] = {{"w", detail::matrix_to_json(p.wg)}, {"b", detail::matrix_to_json(p.bg)}};
  j["mixup"] = {{"wm", detail::matrix_to_json(p.wm)},
                {"attn", detail::matrix_to_json(p.attn)}};
  std::ofstream(path) << j.dump() << "\n";
}

template <typename T>
std::pair<ModelParams<T>, std::string> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("missing checkpoint: " + path.string());
  const nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("format", "") != "gsdn-checkpoint-v1")
    throw data_error("unrecognized checkpoint format");
  ModelParams<T> p;
  p.d = j.at("d").get<std::size_t>();
  p.hidden = j.at("hidden").get<std::size_t>();
  p.layers_n = j.at("layers").get<std::size_t>();
  p.classes = j.at("classes").get<std::size_t>();
  for (const auto& lj : j.at("backbone")) {
    LayerParams<T> l;
    l.w = detail::matrix_from_json<T>(lj.at("w"));
    l.bn_scale = detail::matrix_from_json<T>(lj.at("bn_scale"));
    l.bn_shift = detail::matrix_from_json<T>(lj.at("bn_shift"));
    l.bn = BnStats<T>(l.bn_scale.cols);
    l.bn.running_mean = lj.at("bn_running_mean").get<std::vector<T>>();
    l.bn.running_var = lj.at("bn_running_var").get<std::vector<T>>();
    p.layers.push_back(std::move(l));
  }
  p.wf = detail::matrix_from_json<T>(j.at("head_f").at("w"));
  p.bf = detail::matrix_from_json<T>(j.at("head_f").at("b"));
  p.wg = detail::matrix_from_json<T>(j.at("head_g").at("w"));
  p.bg = detail::matrix_from_json<T>(j.at("head_g").at("b"));
  p.wm = detail::matrix_from_json<T>(j.at("mixup").at("wm"));
  p.attn = detail::matrix_from_json<T>(j.at("mixup").at("attn"));
  // shape validation against the declared dimensions
  if (p.layers.size() != p.layers_n || p.wf.rows != p.hidden || p.wf.cols != p.classes ||
      p.wm.rows != p.d || p.wm.cols != p.hidden || p.attn.rows != 2 * p.hidden)
    throw data_error("checkpoint: dimension mismatch");
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::size_t in = l == 0 ? p.d : p.hidden;
    if (p.layers[l].w.rows != in || p.layers[l].w.cols != p.hidden)
      throw data_error("checkpoint: backbone layer shape mismatch");
  }
  return {std::move(p), j.value("config_hash", "")};
}

/// Deterministic per-epoch metrics CSV (timings live in report.json so two
/// identically-seeded runs produce byte-identical files).
inline void write_metrics_csv(const RunReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "epoch,feat_loss,label_loss,total_loss,val_acc\n";
  char buf[160];
  for (const auto& e : report.epochs) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g\n", e.epoch, e.feat_loss,
                  e.label_loss, e.total_loss, e.val_acc);
    out << buf;
  }
}

inline void write_report_json(const RunReport& report, const std::filesystem::path& path) {
  std::ofstream(path) << report.to_json().dump(2) << "\n";
}

inline void write_bench_csv(const std::vector<BenchRow>& rows,
                            const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "model,dataset,N,E,L,F,median_ms,iqr_ms,reps,threads,fetched_nodes\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%zu,%zu,%zu,%zu,%.6g,%.6g,%zu,%d,%zu\n",
                  r.model.c_str(), r.dataset.c_str(), r.num_nodes, r.num_edges, r.layers,
                  r.hidden, r.median_ms, r.iqr_ms, r.reps, r.threads, r.fetched_nodes);
    out << buf;
  }
}

inline void write_sweep_csv(const SweepTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "experiment,model,x,seed,test_acc\n";
  char buf[160];
  for (const auto& r : table.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.9g,%llu,%.9g\n", table.experiment.c_str(),
                  r.model.c_str(), r.x, static_cast<unsigned long long>(r.seed),
                  r.test_acc);
    out << buf;
  }
}

inline void write_grid_csv(const GridResult& grid, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "hidden,batch_size,lambda,mean_val,std_val,mean_test,std_test\n";
  char buf[200];
  for (const auto& c : grid.table) {
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%.9g,%.9g,%.9g,%.9g,%.9g\n", c.hidden,
                  c.batch_size, c.lambda, c.mean_val, c.std_val, c.mean_test, c.std_test);
    out << buf;
  }
}

inline void write_similarity_csv(const SimilarityCurve& curve,
                                 const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "epoch,hop1_cosine,hop2_cosine\n";
  char buf[120];
  for (std::size_t i = 0; i < curve.epochs.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g\n", curve.epochs[i], curve.hop1[i],
                  curve.hop2[i]);
    out << buf;
  }
}

}  // namespace gsdn
