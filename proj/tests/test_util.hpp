#pragma once
// Shared fixtures and independent oracles for the test suites. Nothing here
// calls into the code under test except to build inputs.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "narrground/kg_store.hpp"

namespace testutil {

inline std::string data_path(const std::string& rel) {
  return std::string(NARRGROUND_TEST_DATA) + "/" + rel;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << bytes;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("narrground_test_" + std::to_string(rd()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct RawEdge {
  std::uint32_t src, rel, dst;
};

// Random directed multigraph without self loops.
inline std::vector<RawEdge> random_edges(std::mt19937_64& rng, std::uint32_t nodes,
                                         std::size_t edges, std::uint32_t rels) {
  std::vector<RawEdge> out;
  while (out.size() < edges) {
    std::uint32_t a = rng() % nodes, b = rng() % nodes;
    if (a == b) continue;
    out.push_back({a, static_cast<std::uint32_t>(rng() % rels), b});
  }
  return out;
}

inline narrground::KgStore make_store(std::uint32_t nodes,
                                       const std::vector<RawEdge>& edges,
                                       std::uint32_t rels) {
  std::vector<narrground::EventualityNode> ns;
  for (std::uint32_t i = 0; i < nodes; ++i) {
    ns.push_back({i, "node " + std::to_string(i), i});
  }
  narrground::RelationTable table;
  for (std::uint32_t r = 0; r < rels; ++r) table.intern("R" + std::to_string(r));
  std::vector<narrground::TypedEdge> es;
  for (const auto& e : edges) es.push_back({e.src, e.rel, e.dst, 1.0});
  return narrground::KgStore::build(std::move(ns), std::move(table), std::move(es));
}

// Hop-distance oracle: Floyd-Warshall over the boolean adjacency matrix.
inline std::vector<std::vector<int>> all_pairs_hops(std::uint32_t n,
                                                    const std::vector<RawEdge>& edges) {
  const int inf = std::numeric_limits<int>::max() / 4;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
  for (std::uint32_t i = 0; i < n; ++i) d[i][i] = 0;
  for (const auto& e : edges) d[e.src][e.dst] = std::min(d[e.src][e.dst], 1);
  for (std::uint32_t k = 0; k < n; ++k)
    for (std::uint32_t i = 0; i < n; ++i)
      for (std::uint32_t j = 0; j < n; ++j)
        d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  return d;
}

// Lexicographically smallest shortest path by exhaustive enumeration of all
// simple paths up to `limit` hops.
inline std::optional<std::vector<std::uint32_t>> brute_force_path(
    std::uint32_t n, const std::vector<RawEdge>& edges, std::uint32_t a,
    std::uint32_t b, int limit) {
  std::vector<std::vector<std::uint32_t>> succ(n);
  for (const auto& e : edges) succ[e.src].push_back(e.dst);
  std::optional<std::vector<std::uint32_t>> best;
  std::vector<std::uint32_t> path{a};
  auto better = [&](const std::vector<std::uint32_t>& p) {
    if (!best) return true;
    if (p.size() != best->size()) return p.size() < best->size();
    return p < *best;
  };
  auto dfs = [&](auto&& self, std::uint32_t v) -> void {
    if (v == b) {
      if (better(path)) best = path;
      return;
    }
    if (static_cast<int>(path.size()) - 1 >= limit) return;
    for (auto w : succ[v]) {
      if (std::find(path.begin(), path.end(), w) != path.end()) continue;
      path.push_back(w);
      self(self, w);
      path.pop_back();
    }
  };
  dfs(dfs, a);
  return best;
}

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs the command-line tool with `args` (already shell-quoted) from inside
// `dir`, capturing stdout and stderr.
inline CliResult run_cli(const TempDir& dir, const std::string& args) {
  static int serial = 0;
  auto tag = std::to_string(serial++);
  auto out = dir.file("cli" + tag + ".stdout");
  auto err = dir.file("cli" + tag + ".stderr");
  std::string cmd = std::string("\"") + NARRGROUND_CLI + "\" " + args + " > \"" + out +
                    "\" 2> \"" + err + "\"";
  int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

inline std::string mini_args() {
  const std::string d = data_path("mini/");
  return "--kg-nodes " + d + "nodes.jsonl --kg-edges " + d + "edges.tsv --events " + d +
         "events.jsonl --tasks " + d + "tasks.jsonl --params " + d + "params.evgw";
}

inline const std::vector<std::string>& pipeline_files() {
  static const std::vector<std::string> files = {
      "normalized.jsonl", "partials.jsonl", "anchors.jsonl", "joint.jsonl",
      "serialized.jsonl", "scores.jsonl",   "stats.json"};
  return files;
}

inline std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace testutil
