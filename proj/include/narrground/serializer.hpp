#pragma once
// Graph sequentialization for LLM prompts: DOT, node list, and edge list.

#include <string>
#include <string_view>
#include <vector>

#include "narrground/retriever.hpp"

namespace narrground {

enum class SerializationVariant { kDot, kNode, kNodeEdge };

struct SerializeOptions {
  SerializationVariant variant = SerializationVariant::kNodeEdge;
  bool relation_labels = false;  // NODE_EDGE only: "a --[rel]--> b"
};

SerializationVariant parse_variant(std::string_view name);
std::string_view variant_name(SerializationVariant variant);

std::string serialize(const JointSubgraph& graph, const SerializeOptions& opts);

struct PromptSpec {
  std::string question;
  std::vector<std::string> choice_blocks;  // labelled A, B, ...
};

// "Event knowledge on narrative choice A: ..." lines, then "Question:" and a
// terminal "Answer:". Throws ConfigError for an empty question or fewer than
// two (or more than 26) choices.
std::string build_prompt(const PromptSpec& spec);

}  // namespace narrground
