#pragma once
// Hand-built graphs shared by the serializer tests and the acceptance suite.

#include <string>
#include <vector>

#include "narrground/retriever.hpp"
#include "test_util.hpp"

namespace fixtures {

inline narrground::KgStore text_store(
    std::uint32_t n, const std::vector<std::pair<std::uint32_t, std::string>>& texts,
    const std::vector<std::tuple<std::uint32_t, std::string, std::uint32_t>>& edges) {
  using namespace narrground;
  std::vector<EventualityNode> nodes;
  for (std::uint32_t i = 0; i < n; ++i) nodes.push_back({i, "filler " + std::to_string(i), 1});
  for (const auto& [id, text] : texts) nodes[id].text = text;
  RelationTable table;
  std::vector<TypedEdge> es;
  for (const auto& [s, r, d] : edges) es.push_back({s, table.intern(r), d, 1.0});
  return KgStore::build(std::move(nodes), std::move(table), std::move(es));
}

inline narrground::AnchorSets anchors(
    const std::vector<std::vector<narrground::NodeId>>& per_event) {
  using namespace narrground;
  AnchorSets sets;
  for (std::size_t e = 0; e < per_event.size(); ++e) {
    FrameRef ref{"story", static_cast<int>(e), 0};
    EventAnchors ea{ref, {}};
    int level = 0;
    for (auto v : per_event[e]) ea.matches.push_back({ref, level++, v, 0.25});
    if (!ea.matches.empty()) sets.events.push_back(ea);
  }
  return sets;
}

// Two context events, three KG nodes on a two-hop path, five nodes total.
inline narrground::JointSubgraph golden_graph() {
  using namespace narrground;
  auto store = text_store(10,
                          {{3, "[P0] drink"}, {5, "[P0] feel tired"}, {9, "[P0] go to bed"}},
                          {{3, "Result", 5}, {5, "Precedence", 9}});
  std::vector<ContextEvent> events = {{{"story", 0, 0}, "[P0] had some wine"},
                                      {{"story", 1, 0}, "[P0] said \"goodbye\""}};
  auto a = anchors({{3}, {5, 9}});
  return build_joint_graph(store, retrieve_subgraph(store, a), events, a, "golden");
}

// Four KG nodes and two KG edges, no context events.
inline narrground::JointSubgraph two_edge_graph() {
  using namespace narrground;
  auto store = text_store(4,
                          {{0, "[P0] buy a boat"},
                           {1, "[P0's] nearby marina have a race"},
                           {2, "[P2] prepare"},
                           {3, "[P2] go to sleep"}},
                          {{0, "Precedence", 1}, {2, "Precedence", 3}});
  KgSubgraph sub;
  sub.nodes = {0, 1, 2, 3};
  sub.edges.assign(store.edges().begin(), store.edges().end());
  return build_joint_graph(store, sub, {}, AnchorSets{}, "two-edge");
}

inline std::string golden(const std::string& name) {
  auto s = testutil::slurp(testutil::data_path("golden/" + name));
  if (!s.empty() && s.back() == '\n') s.pop_back();
  return s;
}

}  // namespace fixtures
