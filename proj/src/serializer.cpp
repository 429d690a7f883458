#include "narrground/serializer.hpp"

#include <map>

#include "narrground/error.hpp"

namespace narrground {

namespace {

std::string dot_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

SerializationVariant parse_variant(std::string_view name) {
  if (name == "dot" || name == "DOT") return SerializationVariant::kDot;
  if (name == "node" || name == "NODE") return SerializationVariant::kNode;
  if (name == "node_edge" || name == "NODE_EDGE" || name == "node-edge") {
    return SerializationVariant::kNodeEdge;
  }
  throw ConfigError("unknown serialization variant '" + std::string(name) +
                    "' (expected dot, node or node_edge)");
}

std::string_view variant_name(SerializationVariant variant) {
  switch (variant) {
    case SerializationVariant::kDot: return "dot";
    case SerializationVariant::kNode: return "node";
    case SerializationVariant::kNodeEdge: return "node_edge";
  }
  return "?";
}

std::string serialize(const JointSubgraph& graph, const SerializeOptions& opts) {
  std::map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    index.emplace(graph.nodes[i].id, i);
  }
  auto at = [&](const std::string& id) {
    auto it = index.find(id);
    if (it == index.end()) throw InvariantError("edge endpoint " + id + " missing");
    return it->second;
  };

  std::string out;
  switch (opts.variant) {
    case SerializationVariant::kNode:
      for (const auto& n : graph.nodes) {
        if (!out.empty()) out += "; ";
        out += n.text;
      }
      break;
    case SerializationVariant::kNodeEdge:
      for (const auto& e : graph.edges) {
        if (!out.empty()) out += "; ";
        out += graph.nodes[at(e.src)].text;
        out += opts.relation_labels ? " --[" + e.rel + "]--> " : " --> ";
        out += graph.nodes[at(e.dst)].text;
      }
      break;
    case SerializationVariant::kDot:
      out = "digraph G {";
      for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
        out += " n" + std::to_string(i) + " [label=\"" +
               dot_escape(graph.nodes[i].text) + "\"];";
      }
      for (const auto& e : graph.edges) {
        out += " n" + std::to_string(at(e.src)) + " -> n" +
               std::to_string(at(e.dst)) + " [label=\"" + dot_escape(e.rel) +
               "\"];";
      }
      out += " }";
      break;
  }
  return out;
}

std::string build_prompt(const PromptSpec& spec) {
  if (spec.question.empty()) throw ConfigError("prompt question is empty");
  if (spec.choice_blocks.size() < 2 || spec.choice_blocks.size() > 26) {
    throw ConfigError("prompt needs between 2 and 26 choices");
  }
  std::string out;
  for (std::size_t i = 0; i < spec.choice_blocks.size(); ++i) {
    out += "Event knowledge on narrative choice ";
    out += static_cast<char>('A' + i);
    out += ": ";
    out += spec.choice_blocks[i];
    out += '\n';
  }
  out += "Question:" + spec.question + "\nAnswer:";
  return out;
}

}  // namespace narrground
