#include "narrground/retriever.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <map>
#include <set>
#include <tuple>

#include "narrground/error.hpp"
#include "narrground/parallel.hpp"

namespace narrground {

namespace {

using json = nlohmann::ordered_json;

// Sort key for node id strings: context nodes first by position, then KG
// nodes by numeric id.
std::pair<int, std::uint64_t> node_key(std::string_view id) {
  int kind;
  std::string_view digits;
  if (id.starts_with("ctx:")) {
    kind = 0;
    digits = id.substr(4);
  } else if (id.starts_with("kg:")) {
    kind = 1;
    digits = id.substr(3);
  } else {
    throw FormatError("bad joint node id '" + std::string(id) + "'");
  }
  std::uint64_t value = 0;
  auto [ptr, ec] =
      std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc() || ptr != digits.data() + digits.size() ||
      digits.empty()) {
    throw FormatError("bad joint node id '" + std::string(id) + "'");
  }
  return {kind, value};
}

bool edge_less(const JointEdge& a, const JointEdge& b) {
  return std::tuple(node_key(a.src), node_key(a.dst), a.rel) <
         std::tuple(node_key(b.src), node_key(b.dst), b.rel);
}

bool node_less(const JointNode& a, const JointNode& b) {
  return node_key(a.id) < node_key(b.id);
}

}  // namespace

PathSearcher::PathSearcher(const KgStore& store)
    : store_(store), stamp_(store.node_count(), 0), dist_(store.node_count(), 0) {}

std::optional<PathResult> PathSearcher::shortest_path(NodeId a, NodeId b,
                                                      int hop_limit) {
  if (!store_.contains(a) || !store_.contains(b)) {
    throw InvariantError("shortest_path: unknown node id " +
                         std::to_string(store_.contains(a) ? b : a));
  }
  if (hop_limit < 1) throw ConfigError("hop limit must be >= 1");
  hop_limit = std::min(hop_limit, 255);
  if (a == b) return PathResult{a, b, {a}, {}};

  if (++generation_ == 0) {
    std::fill(stamp_.begin(), stamp_.end(), 0);
    generation_ = 1;
  }
  auto seen = [&](NodeId v) { return stamp_[v] == generation_; };
  auto mark = [&](NodeId v, int d) {
    stamp_[v] = generation_;
    dist_[v] = static_cast<std::uint8_t>(d);
  };

  // Backward BFS from b labels every node with its hop distance to b. Once a
  // is labeled, all nodes closer to b than a already carry their labels.
  mark(b, 0);
  std::vector<NodeId> frontier{b};
  std::vector<NodeId> next;
  int depth = 0;
  while (!seen(a) && !frontier.empty() && depth < hop_limit) {
    ++depth;
    next.clear();
    for (NodeId v : frontier) {
      for (auto nb : store_.neighbors(v, Direction::kIn)) {
        if (!seen(nb.node)) {
          mark(nb.node, depth);
          next.push_back(nb.node);
        }
      }
    }
    frontier.swap(next);
  }
  if (!seen(a)) return std::nullopt;

  PathResult path{a, b, {a}, {}};
  NodeId cur = a;
  while (cur != b) {
    const int want = dist_[cur] - 1;
    const TypedEdge* chosen = nullptr;
    for (auto nb : store_.neighbors(cur, Direction::kOut)) {
      if (!seen(nb.node) || dist_[nb.node] != want) continue;
      if (chosen == nullptr || nb.node < chosen->dst) chosen = nb.edge;
    }
    if (chosen == nullptr) throw InvariantError("path reconstruction failed");
    path.edges.push_back(*chosen);
    path.nodes.push_back(chosen->dst);
    cur = chosen->dst;
  }
  return path;
}

std::optional<PathResult> shortest_path(const KgStore& store, NodeId a,
                                        NodeId b, int hop_limit) {
  PathSearcher searcher(store);
  return searcher.shortest_path(a, b, hop_limit);
}

KgSubgraph retrieve_subgraph(const KgStore& store, const AnchorSets& anchors,
                             int hop_limit, unsigned threads) {
  std::vector<std::vector<NodeId>> per_event;
  for (const auto& e : anchors.events) {
    auto nodes = AnchorSets::nodes_of(e);
    for (auto v : nodes) {
      if (!store.contains(v)) {
        throw InvariantError("anchor references unknown node " +
                             std::to_string(v));
      }
    }
    per_event.push_back(std::move(nodes));
  }
  std::set<std::pair<NodeId, NodeId>> pair_set;
  for (std::size_t i = 0; i < per_event.size(); ++i) {
    for (std::size_t j = 0; j < per_event.size(); ++j) {
      if (i == j) continue;
      for (auto va : per_event[i]) {
        for (auto vb : per_event[j]) {
          if (va != vb) pair_set.emplace(va, vb);
        }
      }
    }
  }
  std::vector<std::pair<NodeId, NodeId>> pairs(pair_set.begin(), pair_set.end());

  const std::size_t chunks =
      std::max<std::size_t>(1, std::min<std::size_t>(threads, pairs.size()));
  std::vector<std::vector<PathResult>> found(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    PathSearcher searcher(store);
    for (std::size_t p = c; p < pairs.size(); p += chunks) {
      if (auto path = searcher.shortest_path(pairs[p].first, pairs[p].second,
                                             hop_limit)) {
        found[c].push_back(std::move(*path));
      }
    }
  });

  std::set<NodeId> nodes;
  auto key = [](const TypedEdge& e) { return std::tie(e.src, e.rel, e.dst); };
  std::vector<TypedEdge> edges;
  for (const auto& chunk : found) {
    for (const auto& path : chunk) {
      nodes.insert(path.nodes.begin(), path.nodes.end());
      edges.insert(edges.end(), path.edges.begin(), path.edges.end());
    }
  }
  std::sort(edges.begin(), edges.end(),
            [&](const auto& x, const auto& y) { return key(x) < key(y); });
  edges.erase(std::unique(edges.begin(), edges.end(),
                          [&](const auto& x, const auto& y) {
                            return key(x) == key(y);
                          }),
              edges.end());
  return {{nodes.begin(), nodes.end()}, std::move(edges)};
}

std::size_t JointSubgraph::context_count() const {
  return static_cast<std::size_t>(std::count_if(
      nodes.begin(), nodes.end(), [](const auto& n) { return n.is_context; }));
}

std::optional<std::size_t> JointSubgraph::find(std::string_view id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id == id) return i;
  }
  return std::nullopt;
}

std::string context_node_id(std::size_t k) { return "ctx:" + std::to_string(k); }
std::string kg_node_id(NodeId id) { return "kg:" + std::to_string(id); }

JointSubgraph build_joint_graph(const KgStore& store, const KgSubgraph& subgraph,
                                std::span<const ContextEvent> events,
                                const AnchorSets& anchors,
                                std::string instance_id) {
  JointSubgraph g;
  g.instance_id = std::move(instance_id);
  std::map<FrameRef, std::size_t> position;
  for (std::size_t k = 0; k < events.size(); ++k) {
    position.emplace(events[k].ref, k);
    g.nodes.push_back({context_node_id(k), events[k].text, true, k, 0});
  }

  std::set<NodeId> kg_nodes(subgraph.nodes.begin(), subgraph.nodes.end());
  std::set<JointEdge> edges;
  for (const auto& e : anchors.events) {
    auto it = position.find(e.event);
    if (it == position.end()) {
      throw InvariantError("anchor references unknown event " + e.event.doc_id +
                           "/" + std::to_string(e.event.sent_idx) + "/" +
                           std::to_string(e.event.frame_idx));
    }
    for (auto v : AnchorSets::nodes_of(e)) {
      kg_nodes.insert(v);
      edges.insert({context_node_id(it->second), kg_node_id(v),
                    std::string(kGroundingRelation)});
    }
  }
  for (auto v : kg_nodes) {
    g.nodes.push_back({kg_node_id(v), store.node(v).text, false, 0, v});
  }
  for (const auto& e : subgraph.edges) {
    edges.insert({kg_node_id(e.src), kg_node_id(e.dst),
                  store.relations().name(e.rel)});
  }
  for (std::size_t k = 0; k + 1 < events.size(); ++k) {
    edges.insert({context_node_id(k), context_node_id(k + 1),
                  std::string(kContextRelation)});
  }
  g.edges.assign(edges.begin(), edges.end());
  std::sort(g.edges.begin(), g.edges.end(), edge_less);
  return g;
}

json joint_to_json(const JointSubgraph& g) {
  json ctx = json::array();
  json kg = json::array();
  for (const auto& n : g.nodes) {
    (n.is_context ? ctx : kg).push_back({{"id", n.id}, {"text", n.text}});
  }
  json edges = json::array();
  for (const auto& e : g.edges) {
    edges.push_back({{"src", e.src}, {"dst", e.dst}, {"rel", e.rel}});
  }
  return {{"instance_id", g.instance_id},
          {"context_nodes", ctx},
          {"kg_nodes", kg},
          {"edges", edges}};
}

JointSubgraph joint_from_json(const json& j) {
  JointSubgraph g;
  try {
    g.instance_id = j.value("instance_id", "");
    for (const auto& n : j.at("context_nodes")) {
      JointNode node{n.at("id").get<std::string>(),
                     n.at("text").get<std::string>(), true, 0, 0};
      auto [kind, value] = node_key(node.id);
      if (kind != 0) throw FormatError("context node with KG id " + node.id);
      node.context_pos = value;
      g.nodes.push_back(std::move(node));
    }
    for (const auto& n : j.at("kg_nodes")) {
      JointNode node{n.at("id").get<std::string>(),
                     n.at("text").get<std::string>(), false, 0, 0};
      auto [kind, value] = node_key(node.id);
      if (kind != 1) throw FormatError("KG node with context id " + node.id);
      node.kg_id = static_cast<NodeId>(value);
      g.nodes.push_back(std::move(node));
    }
    for (const auto& e : j.at("edges")) {
      g.edges.push_back({e.at("src").get<std::string>(),
                         e.at("dst").get<std::string>(),
                         e.at("rel").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid joint subgraph: ") + e.what());
  }
  std::stable_sort(g.nodes.begin(), g.nodes.end(), node_less);
  std::set<std::string> ids;
  for (const auto& n : g.nodes) {
    if (!ids.insert(n.id).second) throw FormatError("duplicate node " + n.id);
  }
  for (const auto& e : g.edges) {
    if (!ids.contains(e.src) || !ids.contains(e.dst)) {
      throw FormatError("edge references unknown node");
    }
  }
  std::sort(g.edges.begin(), g.edges.end(), edge_less);
  return g;
}

}  // namespace narrground
