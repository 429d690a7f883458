#include <regex>

#include "doctest.h"
#include "narrground/error.hpp"
#include "narrground/serializer.hpp"
#include "fixtures.hpp"

using namespace narrground;

namespace {

struct DotGraph {
  std::vector<std::string> labels;
  std::vector<std::tuple<int, int, std::string>> edges;
};

std::string unescape(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) ++i;
    out += s[i];
  }
  return out;
}

// Just enough of a DOT reader to recover what serialize writes.
DotGraph read_dot(const std::string& text) {
  DotGraph g;
  REQUIRE(text.rfind("digraph G {", 0) == 0);
  REQUIRE(text.size() >= 2);
  REQUIRE(text.substr(text.size() - 2) == " }");
  const std::string label = R"re(\[label="((?:[^"\\]|\\.)*)"\];)re";
  std::regex node_re(R"( n(\d+) )" + label);
  std::regex edge_re(R"( n(\d+) -> n(\d+) )" + label);
  std::string rest = text.substr(11, text.size() - 13);
  std::smatch m;
  while (!rest.empty()) {
    if (std::regex_search(rest, m, edge_re, std::regex_constants::match_continuous)) {
      g.edges.emplace_back(std::stoi(m[1]), std::stoi(m[2]), unescape(m[3]));
    } else if (std::regex_search(rest, m, node_re, std::regex_constants::match_continuous)) {
      CHECK(std::stoul(m[1]) == g.labels.size());
      g.labels.push_back(unescape(m[2]));
    } else {
      FAIL("unparsed DOT text: " << rest);
      break;
    }
    rest = m.suffix();
  }
  return g;
}

std::string run(const JointSubgraph& g, SerializationVariant v, bool rel = false) {
  return serialize(g, {v, rel});
}

}  // namespace

TEST_CASE("golden serializations") {
  auto g = fixtures::golden_graph();
  REQUIRE(g.nodes.size() == 5);
  CHECK(run(g, SerializationVariant::kNode) == fixtures::golden("serializer/node.txt"));
  CHECK(run(g, SerializationVariant::kNodeEdge) == fixtures::golden("serializer/node_edge.txt"));
  CHECK(run(g, SerializationVariant::kNodeEdge, true) ==
        fixtures::golden("serializer/node_edge_rel.txt"));
  CHECK(run(g, SerializationVariant::kDot) == fixtures::golden("serializer/dot.txt"));
}

TEST_CASE("node-and-edge two-edge example") {
  CHECK(run(fixtures::two_edge_graph(), SerializationVariant::kNodeEdge) ==
        "[P0] buy a boat --> [P0's] nearby marina have a race; [P2] prepare --> [P2] go to sleep");
}

TEST_CASE("empty graph") {
  JointSubgraph empty;
  CHECK(run(empty, SerializationVariant::kNode).empty());
  CHECK(run(empty, SerializationVariant::kNodeEdge).empty());
  CHECK(run(empty, SerializationVariant::kDot) == "digraph G { }");
}

TEST_CASE("DOT output reparses to the same graph") {
  for (const auto& g : {fixtures::golden_graph(), fixtures::two_edge_graph()}) {
    auto dot = read_dot(run(g, SerializationVariant::kDot));
    REQUIRE(dot.labels.size() == g.nodes.size());
    for (std::size_t i = 0; i < g.nodes.size(); ++i) CHECK(dot.labels[i] == g.nodes[i].text);
    REQUIRE(dot.edges.size() == g.edges.size());
    for (std::size_t i = 0; i < g.edges.size(); ++i) {
      auto [s, d, rel] = dot.edges[i];
      CHECK(g.nodes[s].id == g.edges[i].src);
      CHECK(g.nodes[d].id == g.edges[i].dst);
      CHECK(rel == g.edges[i].rel);
    }
  }
  JointSubgraph tricky;
  tricky.nodes.push_back({"kg:0", R"(a "quoted" \ backslash)", false, 0, 0});
  auto dot = read_dot(run(tricky, SerializationVariant::kDot));
  CHECK(dot.labels.at(0) == tricky.nodes[0].text);
}

TEST_CASE("every node-and-edge text appears in the node list") {
  auto g = fixtures::golden_graph();
  auto node = run(g, SerializationVariant::kNode);
  for (const auto& e : g.edges) {
    CHECK(node.find(g.nodes[*g.find(e.src)].text) != std::string::npos);
    CHECK(node.find(g.nodes[*g.find(e.dst)].text) != std::string::npos);
  }
}

TEST_CASE("prompt template") {
  CHECK(build_prompt({"Q", {"X", "Y"}}) ==
        "Event knowledge on narrative choice A: X\n"
        "Event knowledge on narrative choice B: Y\n"
        "Question:Q\nAnswer:");
  auto five = build_prompt({"Q", {"1", "2", "3", "4", "5"}});
  CHECK(five.find("choice E: 5\n") != std::string::npos);
  CHECK(five.find("choice F") == std::string::npos);

  auto golden = build_prompt({"What happens next?",
                              {run(fixtures::two_edge_graph(), SerializationVariant::kNodeEdge),
                               "[P0] drink --> [P0] feel tired; [P0] feel tired --> [P0] go to bed"}});
  CHECK(golden == fixtures::golden("serializer/prompt.txt"));

  CHECK_THROWS_AS(build_prompt({"", {"X", "Y"}}), ConfigError);
  CHECK_THROWS_AS(build_prompt({"Q", {"X"}}), ConfigError);
}

TEST_CASE("variant names") {
  CHECK(parse_variant("DOT") == SerializationVariant::kDot);
  CHECK(parse_variant("node_edge") == SerializationVariant::kNodeEdge);
  CHECK(variant_name(SerializationVariant::kNode) == "node");
  CHECK_THROWS_AS(parse_variant("xml"), ConfigError);
}
