#pragma once
// Knowledge-subgraph retrieval by bounded shortest paths between anchors of
// different source events, and assembly of the joint reasoning graph.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "narrground/kg_store.hpp"
#include "narrground/matcher.hpp"

namespace narrground {

inline constexpr int kDefaultHopLimit = 3;

struct PathResult {
  NodeId src = 0;
  NodeId dst = 0;
  std::vector<NodeId> nodes;     // src .. dst
  std::vector<TypedEdge> edges;  // nodes.size() - 1 edges

  std::size_t hops() const { return edges.size(); }
};

// Reusable scratch space for repeated searches over one store.
class PathSearcher {
 public:
  explicit PathSearcher(const KgStore& store);

  // Minimal-hop directed path a -> b with at most `hop_limit` edges; among
  // equal-length paths the lexicographically smallest node sequence, and the
  // smallest relation id between consecutive nodes.
  std::optional<PathResult> shortest_path(NodeId a, NodeId b, int hop_limit);

 private:
  const KgStore& store_;
  std::vector<std::uint32_t> stamp_;
  std::vector<std::uint8_t> dist_;
  std::uint32_t generation_ = 0;
};

std::optional<PathResult> shortest_path(const KgStore& store, NodeId a,
                                        NodeId b, int hop_limit = kDefaultHopLimit);

struct KgSubgraph {
  std::vector<NodeId> nodes;     // ascending
  std::vector<TypedEdge> edges;  // sorted by (src, rel, dst)

  bool operator==(const KgSubgraph&) const = default;
};

KgSubgraph retrieve_subgraph(const KgStore& store, const AnchorSets& anchors,
                             int hop_limit = kDefaultHopLimit,
                             unsigned threads = 1);

inline constexpr std::string_view kGroundingRelation = "grounding";
inline constexpr std::string_view kContextRelation = "context";

// Node id strings are "ctx:<k>" for context events and "kg:<node id>".
struct JointNode {
  std::string id;
  std::string text;
  bool is_context = false;
  std::size_t context_pos = 0;  // narrative position for context nodes
  NodeId kg_id = 0;             // KG id for KG nodes
};

struct JointEdge {
  std::string src;
  std::string dst;
  std::string rel;

  auto operator<=>(const JointEdge&) const = default;
};

struct ContextEvent {
  FrameRef ref;
  std::string text;  // plain rendering
};

struct JointSubgraph {
  std::string instance_id;
  // Canonical order: context nodes in narrative order, then KG nodes by id.
  std::vector<JointNode> nodes;
  // Sorted by (src, dst, rel) on the string ids.
  std::vector<JointEdge> edges;

  std::size_t context_count() const;
  std::size_t kg_count() const { return nodes.size() - context_count(); }
  // Index of a node id string in `nodes`, or nullopt.
  std::optional<std::size_t> find(std::string_view id) const;
};

std::string context_node_id(std::size_t k);
std::string kg_node_id(NodeId id);

// Throws InvariantError if an anchor's event is not among `events`.
JointSubgraph build_joint_graph(const KgStore& store, const KgSubgraph& subgraph,
                                std::span<const ContextEvent> events,
                                const AnchorSets& anchors,
                                std::string instance_id = {});

nlohmann::ordered_json joint_to_json(const JointSubgraph& graph);
JointSubgraph joint_from_json(const nlohmann::ordered_json& j);

}  // namespace narrground
