#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "narrground/jsonl.hpp"
#include "narrground/pipeline.hpp"
#include "test_util.hpp"

using namespace narrground;
using testutil::run_cli;
using testutil::TempDir;
using json = jsonl::json;

namespace {

std::vector<json> records(const std::string& text) {
  std::vector<json> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    out.push_back(json::parse(text.substr(pos, nl - pos)));
    pos = nl + 1;
  }
  return out;
}

void run_pipeline_into(const TempDir& dir, const std::string& sub, const std::string& extra = "") {
  auto r = run_cli(dir, "pipeline " + testutil::mini_args() + " --out-dir " + dir.file(sub) +
                            " " + extra);
  REQUIRE_MESSAGE(r.code == 0, r.err);
}

}  // namespace

TEST_CASE("pipeline emits five joint subgraphs") {
  TempDir dir;
  run_pipeline_into(dir, "run");
  auto joint = records(testutil::slurp(dir.file("run/joint.jsonl")));
  REQUIRE(joint.size() == 5);
  for (std::size_t i = 0; i < joint.size(); ++i) {
    CHECK(joint[i]["instance_id"] == "story" + std::to_string(i + 1));
    CHECK(joint[i]["meta"]["embedder"] == "hashing:64");
  }
  auto serialized = records(testutil::slurp(dir.file("run/serialized.jsonl")));
  std::size_t prompts = 0;
  for (const auto& r : serialized) prompts += r["kind"] == "prompt";
  CHECK(prompts == 2);
  auto scores = records(testutil::slurp(dir.file("run/scores.jsonl")));
  REQUIRE(scores.size() == 2);
  for (const auto& s : scores) {
    double sum = 0;
    for (double p : s["probabilities"]) sum += p;
    CHECK(sum == doctest::Approx(1.0));
  }
}

TEST_CASE("stats match the grounding arithmetic") {
  TempDir dir;
  run_pipeline_into(dir, "run");
  auto anchors = records(testutil::slurp(dir.file("run/anchors.jsonl")));
  auto partials = records(testutil::slurp(dir.file("run/partials.jsonl")));
  double total = 0;
  for (const auto& a : anchors) {
    CHECK(a["distance"].get<double>() <= kDefaultThreshold);
    total += a["distance"].get<double>();
  }
  auto stats = json::parse(testutil::slurp(dir.file("run/stats.json")));
  CHECK(stats["queries"] == partials.size());
  CHECK(stats["hits"] == anchors.size());
  CHECK(stats["hit_rate"].get<double>() ==
        doctest::Approx(static_cast<double>(anchors.size()) / partials.size()));
  CHECK(stats["mean_distance"].get<double>() == doctest::Approx(total / anchors.size()));
  CHECK(stats["mode"] == "full");

  auto r = run_cli(dir, "stats --partials " + dir.file("run/partials.jsonl") + " --anchors " +
                            dir.file("run/anchors.jsonl") + " --joint " +
                            dir.file("run/joint.jsonl"));
  REQUIRE(r.code == 0);
  CHECK(r.out == testutil::slurp(dir.file("run/stats.json")));
}

TEST_CASE("chained commands reproduce the pipeline byte for byte") {
  TempDir dir;
  run_pipeline_into(dir, "run");
  const std::string d = testutil::data_path("mini/");
  const std::string kg = "--kg-nodes " + d + "nodes.jsonl --kg-edges " + d + "edges.tsv";
  auto step = [&](const std::string& args) {
    auto r = run_cli(dir, args);
    REQUIRE_MESSAGE(r.code == 0, r.err);
  };
  step("ingest-kg " + kg + " --out " + dir.file("kg.evgs"));
  step("normalize --events " + d + "events.jsonl --out " + dir.file("normalized.jsonl"));
  step("pie --normalized " + dir.file("normalized.jsonl") + " --out " + dir.file("partials.jsonl"));
  step("ground --kg-snapshot " + dir.file("kg.evgs") + " --partials " +
       dir.file("partials.jsonl") + " --out " + dir.file("anchors.jsonl"));
  step("retrieve --kg-snapshot " + dir.file("kg.evgs") + " --normalized " +
       dir.file("normalized.jsonl") + " --anchors " + dir.file("anchors.jsonl") + " --out " +
       dir.file("joint.jsonl"));
  step("serialize --joint " + dir.file("joint.jsonl") + " --tasks " + d + "tasks.jsonl --out " +
       dir.file("serialized.jsonl"));
  step("score " + kg + " --joint " + dir.file("joint.jsonl") + " --tasks " + d +
       "tasks.jsonl --params " + d + "params.evgw --out " + dir.file("scores.jsonl"));
  step("stats --partials " + dir.file("partials.jsonl") + " --anchors " +
       dir.file("anchors.jsonl") + " --joint " + dir.file("joint.jsonl") + " --out " +
       dir.file("stats.json"));
  for (const auto& f : testutil::pipeline_files()) {
    CAPTURE(f);
    CHECK(testutil::slurp(dir.file(f)) == testutil::slurp(dir.file("run/" + f)));
  }
}

TEST_CASE("ground without PIE is a subset of ground with PIE") {
  TempDir dir;
  const std::string d = testutil::data_path("mini/");
  const std::string kg = "--kg-nodes " + d + "nodes.jsonl --kg-edges " + d + "edges.tsv";
  REQUIRE(run_cli(dir, "normalize --events " + d + "events.jsonl --out " + dir.file("n.jsonl")).code == 0);
  REQUIRE(run_cli(dir, "pie --normalized " + dir.file("n.jsonl") + " --out " + dir.file("p.jsonl")).code == 0);
  REQUIRE(run_cli(dir, "pie --no-pie --normalized " + dir.file("n.jsonl") + " --out " + dir.file("p0.jsonl")).code == 0);
  auto with = run_cli(dir, "ground " + kg + " --partials " + dir.file("p.jsonl"));
  auto without = run_cli(dir, "ground --no-pie " + kg + " --partials " + dir.file("p0.jsonl"));
  REQUIRE(with.code == 0);
  REQUIRE(without.code == 0);
  auto key = [](const json& r) {
    return r["doc_id"].dump() + r["sent_idx"].dump() + r["frame_idx"].dump() +
           r["level"].dump() + r["node_id"].dump();
  };
  std::set<std::string> big;
  for (const auto& r : records(with.out)) big.insert(key(r));
  auto small = records(without.out);
  CHECK_FALSE(small.empty());
  for (const auto& r : small) CHECK(big.count(key(r)) == 1);
  CHECK(small.size() < big.size());
}

TEST_CASE("outputs do not depend on the thread count") {
  TempDir dir;
  run_pipeline_into(dir, "one", "--threads 1");
  run_pipeline_into(dir, "four", "--threads 4");
  run_pipeline_into(dir, "again", "--threads 1");
  for (const auto& f : testutil::pipeline_files()) {
    CAPTURE(f);
    auto one = testutil::slurp(dir.file("one/" + f));
    CHECK_FALSE(one.empty());
    CHECK(one == testutil::slurp(dir.file("four/" + f)));
    CHECK(one == testutil::slurp(dir.file("again/" + f)));
  }
}

TEST_CASE("ablation modes") {
  TempDir dir;
  const std::string d = testutil::data_path("mini/");
  run_pipeline_into(dir, "sent", "--no-extract --sentences " + d + "sentences.jsonl");
  auto stats = json::parse(testutil::slurp(dir.file("sent/stats.json")));
  CHECK(stats["mode"] == "no_extract+no_pie");
  CHECK(stats.contains("hit_rate"));
  CHECK_FALSE(std::filesystem::exists(dir.file("sent/partials.jsonl")));

  run_pipeline_into(dir, "raw", "--no-norm");
  auto normalized = testutil::slurp(dir.file("raw/normalized.jsonl"));
  CHECK(normalized.find("[P0]") == std::string::npos);
  CHECK(json::parse(testutil::slurp(dir.file("raw/stats.json")))["mode"] == "no_norm");
}

TEST_CASE("config file with flag overrides") {
  TempDir dir;
  const std::string d = testutil::data_path("mini/");
  testutil::spit(dir.file("run.conf"),
                 "kg_nodes = " + d + "nodes.jsonl\nkg_edges = " + d + "edges.tsv\nevents = " + d +
                     "events.jsonl\nthreshold = 0.3\ncap = ARG0\n");
  auto r = run_cli(dir, "--config " + dir.file("run.conf") + " pipeline --threshold 0.5 --out-dir " +
                            dir.file("conf"));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  auto stats = json::parse(testutil::slurp(dir.file("conf/stats.json")));
  CHECK(stats["meta"]["threshold"] == 0.5);
  CHECK(stats["meta"]["cap"] == "ARG0");
}

TEST_CASE("exit codes and error records") {
  TempDir dir;
  const std::string d = testutil::data_path("mini/");

  auto bad_cap = run_cli(dir, "pipeline " + testutil::mini_args() + " --cap ARG9 --out-dir " +
                                  dir.file("x"));
  CHECK(bad_cap.code == 3);
  auto err = json::parse(bad_cap.err);
  CHECK(err["error"] == "config");
  CHECK(testutil::count_lines(bad_cap.err) == 1);

  CHECK(run_cli(dir, "pipeline --threshold -1 " + testutil::mini_args() + " --out-dir " +
                         dir.file("x")).code == 3);
  CHECK(run_cli(dir, "normalize").code == 3);
  CHECK(run_cli(dir, "frobnicate").code == 3);

  testutil::spit(dir.file("bad_edges.tsv"), "0\tPrecedence\t1\n0\tPrecedence\n");
  auto fmt = run_cli(dir, "ingest-kg --kg-nodes " + d + "nodes.jsonl --kg-edges " +
                              dir.file("bad_edges.tsv") + " --out " + dir.file("kg.evgs"));
  CHECK(fmt.code == 2);
  CHECK(json::parse(fmt.err)["message"].get<std::string>().find(":2") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir.file("kg.evgs")));

  testutil::spit(dir.file("bad_events.jsonl"), "{\"doc_id\": \"x\"}\n");
  auto ev = run_cli(dir, "pipeline " + testutil::mini_args() + " --events " +
                             dir.file("bad_events.jsonl") + " --out-dir " + dir.file("partial"));
  CHECK(ev.code == 2);
  CHECK(std::filesystem::is_empty(dir.file("partial")));

  testutil::spit(dir.file("junk.evgw"), "EVGWjunk");
  auto junk = run_cli(dir, "pipeline " + testutil::mini_args() + " --params " +
                               dir.file("junk.evgw") + " --out-dir " + dir.file("late"));
  CHECK(junk.code == 2);
  CHECK(std::filesystem::is_empty(dir.file("late")));
}

TEST_CASE("in-process stages agree with the records they write") {
  pipeline::Config config;
  config.events = testutil::data_path("mini/events.jsonl");
  config.finalize();
  auto frames = pipeline::read_frames(config.events);
  auto events = pipeline::normalize_frames(frames, false, 2);
  CHECK(events.size() == frames.size());
  auto partials = pipeline::extract_partials(events, AbstractionCap::kArg1);
  CHECK(partials.size() >= events.size());
  auto contexts = pipeline::context_events(events);
  CHECK(contexts.front().text == "[P0] had some wine at a party.");
}
