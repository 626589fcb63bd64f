#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "gsdn/graph.hpp"

namespace gsdn {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace detail {

/// Canonical float formatting: shortest form that round-trips float32.
inline std::string fmt_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw data_error("missing file: " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

/// Load a dataset directory: manifest.json, features.csv, edges.csv,
/// labels.csv, splits.json. Validation failures name the offending row.
inline std::pair<GraphDataset, SplitMask> load_dataset(const fs::path& dir) {
  const json manifest = json::parse(detail::read_file(dir / "manifest.json"));
  const std::size_t n = manifest.at("num_nodes").get<std::size_t>();
  const std::size_t d = manifest.at("num_features").get<std::size_t>();
  const std::size_t c = manifest.at("num_classes").get<std::size_t>();

  Matrix<float> features(n, d);
  {
    std::istringstream in(detail::read_file(dir / "features.csv"));
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (row >= n) throw data_error("features.csv has more rows than manifest num_nodes");
      std::istringstream ls(line);
      std::string cell;
      std::size_t col = 0;
      while (std::getline(ls, cell, ',')) {
        if (col >= d)
          throw data_error("features.csv row " + std::to_string(row + 1) + ": too many columns");
        features(row, col++) = std::stof(cell);
      }
      if (col != d)
        throw data_error("features.csv row " + std::to_string(row + 1) + ": expected " +
                         std::to_string(d) + " columns, got " + std::to_string(col));
      ++row;
    }
    if (row != n)
      throw data_error("features.csv: expected " + std::to_string(n) + " rows, got " +
                       std::to_string(row));
  }

  std::vector<Edge> edges;
  {
    std::istringstream in(detail::read_file(dir / "edges.csv"));
    std::string line;
    std::size_t row = 0;
    std::set<Edge> seen;
    while (std::getline(in, line)) {
      ++row;
      if (line.empty()) continue;
      std::size_t a, b;
      if (std::sscanf(line.c_str(), "%zu,%zu", &a, &b) != 2)
        throw data_error("edges.csv row " + std::to_string(row) + ": malformed");
      if (a == b)
        throw data_error("edges.csv row " + std::to_string(row) + ": self-loop " +
                         std::to_string(a));
      if (a >= n || b >= n)
        throw data_error("edges.csv row " + std::to_string(row) + ": endpoint out of range");
      const Edge e{std::min(a, b), std::max(a, b)};
      if (!seen.insert(e).second)
        throw data_error("edges.csv row " + std::to_string(row) + ": duplicate edge");
      edges.push_back(e);
    }
  }

  std::vector<std::size_t> labels;
  {
    std::istringstream in(detail::read_file(dir / "labels.csv"));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const long v = std::stol(line);
      if (v < 0 || static_cast<std::size_t>(v) >= c)
        throw data_error("labels.csv row " + std::to_string(labels.size() + 1) +
                         ": label out of range");
      labels.push_back(static_cast<std::size_t>(v));
    }
    if (labels.size() != n)
      throw data_error("labels.csv: expected " + std::to_string(n) + " rows");
  }

  const json splits = json::parse(detail::read_file(dir / "splits.json"));
  SplitMask mask;
  mask.train = splits.at("train").get<std::vector<NodeId>>();
  mask.val = splits.at("val").get<std::vector<NodeId>>();
  mask.test = splits.at("test").get<std::vector<NodeId>>();
  std::set<NodeId> all;
  for (const auto* part : {&mask.train, &mask.val, &mask.test})
    for (NodeId v : *part) {
      if (v >= n) throw data_error("splits.json: node id out of range");
      if (!all.insert(v).second) throw data_error("splits.json: overlapping splits");
    }
  if (mask.train.empty()) throw data_error("splits.json: empty train split");

  return {GraphDataset(std::move(features), std::move(edges), std::move(labels), c),
          std::move(mask)};
}

/// Save in the canonical on-disk form; load(save(x)) is byte-identical.
inline void save_dataset(const GraphDataset& g, const SplitMask& split,
                         const fs::path& dir) {
  fs::create_directories(dir);
  {
    json manifest{{"num_nodes", g.num_nodes()},
                  {"num_features", g.num_features()},
                  {"num_classes", g.num_classes()}};
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
  }
  {
    std::ofstream out(dir / "features.csv");
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
      for (std::size_t j = 0; j < g.num_features(); ++j) {
        if (j) out << ',';
        out << detail::fmt_float(g.features()(i, j));
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "edges.csv");
    for (auto [a, b] : g.edges()) out << a << ',' << b << '\n';
  }
  {
    std::ofstream out(dir / "labels.csv");
    for (std::size_t l : g.labels()) out << l << '\n';
  }
  {
    auto sorted = [](std::vector<NodeId> v) {
      std::sort(v.begin(), v.end());
      return v;
    };
    json splits{{"train", sorted(split.train)},
                {"val", sorted(split.val)},
                {"test", sorted(split.test)}};
    std::ofstream(dir / "splits.json") << splits.dump(2) << "\n";
  }
}

}  // namespace gsdn
