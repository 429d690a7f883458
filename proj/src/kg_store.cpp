#include "narrground/kg_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <tuple>

#include "narrground/binary_io.hpp"
#include "narrground/error.hpp"
#include "narrground/jsonl.hpp"

namespace narrground {

namespace {

constexpr char kSnapshotMagic[4] = {'E', 'V', 'G', 'S'};
constexpr std::uint32_t kSnapshotVersion = 1;

std::string at_line(const std::string& path, std::size_t line_no) {
  return path + ":" + std::to_string(line_no) + ": ";
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

RelationId RelationTable::intern(std::string_view name) {
  auto it = ids_.find(std::string(name));
  if (it != ids_.end()) return it->second;
  auto id = static_cast<RelationId>(names_.size());
  names_.emplace_back(name);
  ids_.emplace(names_.back(), id);
  return id;
}

std::optional<RelationId> RelationTable::find(std::string_view name) const {
  auto it = ids_.find(std::string(name));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& RelationTable::name(RelationId id) const {
  if (id >= names_.size()) {
    throw InvariantError("unknown relation id " + std::to_string(id));
  }
  return names_[id];
}

KgStore KgStore::build(std::vector<EventualityNode> nodes,
                       RelationTable relations, std::vector<TypedEdge> edges) {
  KgStore store;
  const std::size_t n = nodes.size();
  std::vector<bool> seen(n, false);
  for (const auto& node : nodes) {
    if (node.id >= n) {
      throw FormatError("node id " + std::to_string(node.id) +
                        " is not dense in 0.." + std::to_string(n - 1));
    }
    if (seen[node.id]) {
      throw FormatError("duplicate node id " + std::to_string(node.id));
    }
    if (node.text.empty()) {
      throw FormatError("node " + std::to_string(node.id) + " has empty text");
    }
    seen[node.id] = true;
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });

  for (const auto& e : edges) {
    if (e.src >= n || e.dst >= n) {
      throw FormatError("edge references unknown node id " +
                        std::to_string(e.src >= n ? e.src : e.dst));
    }
    if (e.rel >= relations.size()) {
      throw FormatError("edge references unknown relation id " +
                        std::to_string(e.rel));
    }
    if (!(e.weight >= 0.0) || !std::isfinite(e.weight)) {
      throw FormatError("edge weight must be finite and non-negative");
    }
  }
  auto key = [](const TypedEdge& e) { return std::tie(e.src, e.rel, e.dst); };
  std::sort(edges.begin(), edges.end(),
            [&](const auto& a, const auto& b) { return key(a) < key(b); });
  std::vector<TypedEdge> merged;
  merged.reserve(edges.size());
  for (const auto& e : edges) {
    if (!merged.empty() && key(merged.back()) == key(e)) {
      merged.back().weight += e.weight;
    } else {
      merged.push_back(e);
    }
  }
  if (merged.size() > UINT32_MAX) {
    throw FormatError("edge count exceeds 2^32");
  }

  store.nodes_ = std::move(nodes);
  store.relations_ = std::move(relations);
  store.edges_ = std::move(merged);
  store.index_adjacency();
  return store;
}

void KgStore::index_adjacency() {
  const std::size_t n = nodes_.size();
  out_offsets_.assign(n + 1, 0);
  in_offsets_.assign(n + 1, 0);
  for (const auto& e : edges_) {
    ++out_offsets_[e.src + 1];
    ++in_offsets_[e.dst + 1];
  }
  std::partial_sum(out_offsets_.begin(), out_offsets_.end(),
                   out_offsets_.begin());
  std::partial_sum(in_offsets_.begin(), in_offsets_.end(),
                   in_offsets_.begin());

  // Edges are sorted by src, so a stable counting sort by dst keeps each
  // incoming bucket ordered by src; a per-bucket sort then orders by rel.
  in_index_.assign(edges_.size(), 0);
  std::vector<std::uint64_t> cursor(in_offsets_.begin(), in_offsets_.end() - 1);
  for (std::uint32_t i = 0; i < edges_.size(); ++i) {
    in_index_[cursor[edges_[i].dst]++] = i;
  }
  for (std::size_t v = 0; v < n; ++v) {
    std::stable_sort(in_index_.begin() + in_offsets_[v],
                     in_index_.begin() + in_offsets_[v + 1],
                     [&](std::uint32_t a, std::uint32_t b) {
                       return edges_[a].rel < edges_[b].rel;
                     });
  }
}

KgStore KgStore::load(const std::string& nodes_path,
                      const std::string& edges_path) {
  std::vector<EventualityNode> nodes;
  jsonl::for_each_line(nodes_path, [&](std::size_t line_no,
                                       std::string_view line) {
    auto j = jsonl::json::parse(line, nullptr, false);
    auto bad = [&](const std::string& why) {
      return FormatError(at_line(nodes_path, line_no) + why);
    };
    if (j.is_discarded() || !j.is_object()) throw bad("malformed record");
    auto id = j.find("id");
    auto text = j.find("text");
    auto freq = j.find("freq");
    if (id == j.end() || !id->is_number_unsigned()) throw bad("bad 'id'");
    if (text == j.end() || !text->is_string()) throw bad("bad 'text'");
    if (freq == j.end() || !freq->is_number_unsigned()) throw bad("bad 'freq'");
    auto raw_id = id->get<std::uint64_t>();
    if (raw_id > UINT32_MAX) throw bad("node id out of range");
    nodes.push_back({static_cast<NodeId>(raw_id), text->get<std::string>(),
                     freq->get<std::uint64_t>()});
  });

  RelationTable relations;
  std::vector<TypedEdge> edges;
  jsonl::for_each_line(edges_path, [&](std::size_t line_no,
                                       std::string_view line) {
    auto bad = [&](const std::string& why) {
      return FormatError(at_line(edges_path, line_no) + why);
    };
    std::vector<std::string_view> cols;
    std::size_t start = 0;
    while (true) {
      auto tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    if (cols.size() != 3 && cols.size() != 4) {
      throw bad("expected src<TAB>rel<TAB>dst[<TAB>weight]");
    }
    TypedEdge e;
    if (!parse_number(cols[0], e.src)) throw bad("bad src id");
    if (!parse_number(cols[2], e.dst)) throw bad("bad dst id");
    if (cols[1].empty()) throw bad("empty relation name");
    if (cols.size() == 4 && !parse_number(cols[3], e.weight)) {
      throw bad("bad weight");
    }
    if (e.src >= nodes.size() || e.dst >= nodes.size()) {
      throw bad("unknown node id " +
                std::to_string(e.src >= nodes.size() ? e.src : e.dst));
    }
    e.rel = relations.intern(cols[1]);
    edges.push_back(e);
  });

  return build(std::move(nodes), std::move(relations), std::move(edges));
}

const EventualityNode& KgStore::node(NodeId id) const {
  if (!contains(id)) {
    throw InvariantError("unknown node id " + std::to_string(id));
  }
  return nodes_[id];
}

NeighborRange KgStore::neighbors(NodeId node, Direction direction) const {
  if (!contains(node)) {
    throw InvariantError("unknown node id " + std::to_string(node));
  }
  if (direction == Direction::kOut) {
    return {edges_.data(), nullptr, out_offsets_[node], out_offsets_[node + 1],
            Direction::kOut};
  }
  return {edges_.data(), in_index_.data(), in_offsets_[node],
          in_offsets_[node + 1], Direction::kIn};
}

std::string KgStore::snapshot() const {
  binio::Writer w;
  w.put_bytes(std::string_view(kSnapshotMagic, 4));
  w.put(kSnapshotVersion);
  w.put(static_cast<std::uint64_t>(nodes_.size()));
  w.put(static_cast<std::uint64_t>(edges_.size()));
  w.put(static_cast<std::uint32_t>(relations_.size()));
  for (const auto& name : relations_.names()) w.put_string(name);
  for (const auto& node : nodes_) {
    w.put(node.freq);
    w.put_string(node.text);
  }
  for (const auto& e : edges_) {
    w.put(e.src);
    w.put(e.rel);
    w.put(e.dst);
    w.put(e.weight);
  }
  return std::move(w).bytes();
}

KgStore KgStore::restore(std::string_view blob) {
  binio::Reader r(blob, "snapshot");
  if (r.get_bytes(4) != std::string_view(kSnapshotMagic, 4)) {
    throw FormatError("snapshot: bad magic (expected EVGS)");
  }
  auto version = r.get<std::uint32_t>();
  if (version != kSnapshotVersion) {
    throw FormatError("snapshot: unsupported version " +
                      std::to_string(version));
  }
  auto node_count = r.get<std::uint64_t>();
  auto edge_count = r.get<std::uint64_t>();
  auto rel_count = r.get<std::uint32_t>();
  // Cheap plausibility bound before allocating.
  if (node_count > r.remaining() || edge_count > r.remaining()) {
    throw FormatError("snapshot: truncated");
  }

  RelationTable relations;
  for (std::uint32_t i = 0; i < rel_count; ++i) {
    relations.intern(r.get_string());
  }
  if (relations.size() != rel_count) {
    throw FormatError("snapshot: duplicate relation names");
  }
  std::vector<EventualityNode> nodes(node_count);
  for (std::uint64_t i = 0; i < node_count; ++i) {
    nodes[i].id = static_cast<NodeId>(i);
    nodes[i].freq = r.get<std::uint64_t>();
    nodes[i].text = r.get_string();
  }
  std::vector<TypedEdge> edges(edge_count);
  for (auto& e : edges) {
    e.src = r.get<NodeId>();
    e.rel = r.get<RelationId>();
    e.dst = r.get<NodeId>();
    e.weight = r.get<double>();
  }
  if (r.remaining() != 0) throw FormatError("snapshot: trailing bytes");
  auto store = build(std::move(nodes), std::move(relations), std::move(edges));
  if (store.edge_count() != edge_count) {
    throw FormatError("snapshot: edge list not canonical");
  }
  return store;
}

}  // namespace narrground
