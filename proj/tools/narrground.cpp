// narrground: command-line front end for the grounding pipeline.
//
// Every subcommand reads line-delimited inputs and writes line-delimited
// outputs (stdout unless --out is given). Failures print one JSON error
// record on stderr and exit with 2 (input format), 3 (config) or
// 4 (internal invariant).

#include <filesystem>
#include <iostream>
#include <set>

#include "CLI11.hpp"

#include "narrground/binary_io.hpp"
#include "narrground/error.hpp"
#include "narrground/jsonl.hpp"
#include "narrground/pipeline.hpp"

namespace eg = narrground;
namespace pl = narrground::pipeline;
namespace fs = std::filesystem;

namespace {

struct Cli {
  pl::Config config;
  std::string cap = "ARG1";
  std::string variant = "node_edge";
  std::string backend = "exact";
  std::string out;
  std::string normalized;
  std::string partials;
  std::string anchors;
  std::string joint;
  // init-params
  std::vector<int> dims;
  int num_bases = -1;
  bool attention = false;
  bool strict = false;
  int text_dim = 0;
};

// Writes to a sibling temp file and renames, so a failed command leaves no
// partial output behind.
void write_output(const std::string& out, const std::string& bytes) {
  if (out.empty()) {
    std::cout << bytes;
    std::cout.flush();
    return;
  }
  auto tmp = out + ".tmp";
  try {
    eg::binio::write_file(tmp, bytes);
    fs::rename(tmp, out);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
}

void write_records(const std::string& out, const std::vector<nlohmann::ordered_json>& r) {
  write_output(out, eg::jsonl::dump(r));
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw eg::ConfigError(std::string("missing ") + flag);
}

std::vector<eg::ContextEvent> contexts_for(const Cli& cli) {
  std::vector<eg::ContextEvent> contexts;
  if (cli.config.no_extract) {
    require(cli.config.sentences, "--sentences");
    pl::read_sentence_texts(cli.config.sentences, contexts);
  } else {
    require(cli.normalized, "--normalized");
    auto events = pl::read_normalized(cli.normalized);
    contexts = pl::context_events(events);
  }
  return contexts;
}

int fail(eg::ErrorKind kind, const std::string& message) {
  const char* name = kind == eg::ErrorKind::kInputFormat ? "input_format"
                     : kind == eg::ErrorKind::kConfig    ? "config"
                                                         : "internal";
  nlohmann::ordered_json err = {{"error", name}, {"message", message}};
  std::cerr << err.dump() << '\n';
  return static_cast<int>(kind);
}

}  // namespace

int main(int argc, char** argv) {
  Cli cli;
  auto& c = cli.config;
  CLI::App app{"Ground narratives to an eventuality knowledge graph"};
  app.set_config("--config", "", "key = value configuration file");
  app.fallthrough();
  app.require_subcommand(1);
  // A repeated flag overrides the earlier value (and the config file).
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  app.add_option("--kg-nodes,--kg_nodes", c.kg_nodes, "KG nodes file (JSON lines)");
  app.add_option("--kg-edges,--kg_edges", c.kg_edges, "KG edges file (TSV)");
  app.add_option("--kg-snapshot,--kg_snapshot", c.kg_snapshot, "KG snapshot (EVGS)");
  app.add_option("--embeddings", c.embeddings, "KG node embeddings (EVGE)");
  app.add_option("--query-embeddings,--query_embeddings", c.query_embeddings,
                 "partial-event embeddings (EVGE, row i = record i)");
  app.add_option("--events", c.events, "SRL frames (JSON lines)");
  app.add_option("--sentences", c.sentences, "raw documents for --no-extract");
  app.add_option("--tasks", c.tasks, "multiple-choice tasks (JSON lines)");
  app.add_option("--params", c.params, "scorer parameters (EVGW)");
  app.add_option("--out-dir,--out_dir", c.out_dir, "pipeline output directory");
  app.add_option("--normalized", cli.normalized, "normalized events file");
  app.add_option("--partials", cli.partials, "partial events file");
  app.add_option("--anchors", cli.anchors, "anchor matches file");
  app.add_option("--joint", cli.joint, "joint subgraphs file");
  app.add_option("--out", cli.out, "output file (default stdout)");

  app.add_option("--threshold", c.threshold, "L2 acceptance threshold")
      ->capture_default_str();
  app.add_option("--hops", c.hops, "path hop limit")->capture_default_str();
  app.add_option("--cap", cli.cap, "abstraction cap: NONE ARGM ARG234 ARG1 ARG0")
      ->capture_default_str();
  app.add_flag("--no-extract,--no_extract", c.no_extract,
               "ground whole sentences instead of events");
  app.add_flag("--no-norm,--no_norm", c.no_norm, "skip person-token normalization");
  app.add_flag("--no-pie,--no_pie", c.no_pie, "skip partial information extraction");
  app.add_option("--variant", cli.variant, "dot | node | node_edge")
      ->capture_default_str();
  app.add_flag("--relation-labels,--relation_labels", c.relation_labels,
               "node_edge: print relation names on edges");
  app.add_option("--embed-dim,--embed_dim", c.embed_dim, "fallback embedder width")
      ->capture_default_str();
  app.add_option("--backend", cli.backend, "exact | approximate")->capture_default_str();
  app.add_option("--seed", c.seed, "seed for randomized internals")->capture_default_str();
  app.add_option("--threads", c.threads, "worker threads")->capture_default_str();
  app.add_option("--top-k,--top_k", c.top_k, "attention nodes reported per choice")
      ->capture_default_str();

  auto* ingest = app.add_subcommand("ingest-kg", "load the KG and write a snapshot");
  auto* normalize = app.add_subcommand("normalize", "person-token normalization");
  auto* pie = app.add_subcommand("pie", "partial information extraction");
  auto* ground = app.add_subcommand("ground", "match partial events to anchors");
  auto* retrieve = app.add_subcommand("retrieve", "build joint subgraphs");
  auto* serialize = app.add_subcommand("serialize", "sequentialize joint subgraphs");
  auto* score = app.add_subcommand("score", "RGCN multiple-choice scoring");
  auto* stats = app.add_subcommand("stats", "grounding and subgraph statistics");
  auto* pipeline = app.add_subcommand("pipeline", "run every stage into --out-dir");
  auto* init = app.add_subcommand("init-params", "write random scorer parameters");
  init->add_option("--dims", cli.dims, "input dim then one width per layer")
      ->required()
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  init->add_option("--num-bases", cli.num_bases, "-1 for full relation matrices");
  init->add_flag("--attention", cli.attention, "attention pooling");
  init->add_flag("--strict", cli.strict, "omit the self-loop term");
  init->add_option("--text-dim", cli.text_dim, "text embedding width (default --embed-dim)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(eg::ErrorKind::kConfig, e.what());
  }

  try {
    c.cap = eg::parse_cap(cli.cap);
    c.variant = eg::parse_variant(cli.variant);
    if (cli.backend == "exact") {
      c.backend = eg::SearchBackend::kExact;
    } else if (cli.backend == "approximate") {
      c.backend = eg::SearchBackend::kApproximate;
    } else {
      throw eg::ConfigError("unknown backend '" + cli.backend + "'");
    }
    c.finalize();

    if (*ingest) {
      require(c.kg_nodes, "--kg-nodes");
      require(c.kg_edges, "--kg-edges");
      require(cli.out, "--out");
      auto store = eg::KgStore::load(c.kg_nodes, c.kg_edges);
      write_output(cli.out, store.snapshot());
      nlohmann::ordered_json summary = {{"nodes", store.node_count()},
                                {"edges", store.edge_count()},
                                {"relations", store.relations().size()}};
      std::cout << summary.dump() << '\n';
    } else if (*normalize) {
      require(c.events, "--events");
      auto frames = pl::read_frames(c.events);
      auto events = pl::normalize_frames(frames, c.no_norm, c.threads);
      write_records(cli.out, pl::normalized_records(events));
    } else if (*pie) {
      require(cli.normalized, "--normalized");
      auto events = pl::read_normalized(cli.normalized);
      write_records(cli.out, pl::partial_records(
                                 pl::extract_partials(events, c.effective_cap())));
    } else if (*ground) {
      auto res = pl::load_resources(c);
      eg::AnchorSets anchors;
      if (c.no_extract) {
        std::vector<eg::ContextEvent> contexts;
        require(c.sentences, "--sentences");
        auto queries = pl::read_sentence_texts(c.sentences, contexts);
        for (std::size_t i = 0; i < queries.size(); ++i) {
          queries[i].vector = res.embedder.embed(contexts[i].text);
        }
        anchors = pl::ground_sentences(res, queries, c);
      } else {
        require(cli.partials, "--partials");
        auto partials = pl::read_partials(cli.partials);
        anchors = pl::ground_partials(res, partials, c);
      }
      write_records(cli.out, pl::anchor_records(anchors, c));
    } else if (*retrieve) {
      require(cli.anchors, "--anchors");
      auto res = pl::load_resources(c, /*with_index=*/false);
      auto contexts = contexts_for(cli);
      auto anchors = pl::read_anchors(cli.anchors);
      auto graphs = pl::build_joint_graphs(res.store, contexts, anchors, c);
      write_records(cli.out, pl::joint_records(graphs, c));
    } else if (*serialize) {
      require(cli.joint, "--joint");
      auto graphs = pl::read_joint(cli.joint);
      std::vector<pl::Task> tasks;
      if (!c.tasks.empty()) tasks = pl::read_tasks(c.tasks);
      write_records(cli.out, pl::serialize_records(graphs, tasks, c));
    } else if (*score) {
      require(cli.joint, "--joint");
      require(c.tasks, "--tasks");
      require(c.params, "--params");
      auto res = pl::load_resources(c, /*with_index=*/!c.embeddings.empty());
      auto graphs = pl::read_joint(cli.joint);
      auto tasks = pl::read_tasks(c.tasks);
      auto params = eg::rgcn::RgcnParams::read(c.params);
      write_records(cli.out, pl::score_records(graphs, tasks, params, res, c));
    } else if (*stats) {
      require(cli.anchors, "--anchors");
      std::uint64_t queries = 0;
      std::size_t sources = 0;
      if (c.no_extract) {
        std::vector<eg::ContextEvent> contexts;
        require(c.sentences, "--sentences");
        queries = pl::read_sentence_texts(c.sentences, contexts).size();
        sources = contexts.size();
      } else {
        require(cli.partials, "--partials");
        auto partials = pl::read_partials(cli.partials);
        std::set<eg::FrameRef> refs;
        for (const auto& p : partials) refs.insert(p.ref);
        queries = partials.size();
        sources = refs.size();
      }
      auto anchors = pl::read_anchors(cli.anchors);
      std::vector<eg::JointSubgraph> graphs;
      if (!cli.joint.empty()) graphs = pl::read_joint(cli.joint);
      write_output(cli.out,
                   pl::stats_record(queries, sources, anchors, graphs, c).dump() + "\n");
    } else if (*pipeline) {
      pl::run_pipeline(c);
    } else if (*init) {
      require(cli.out, "--out");
      eg::rgcn::InitConfig ic;
      if (!c.kg_nodes.empty() || !c.kg_snapshot.empty()) {
        auto res = pl::load_resources(c, /*with_index=*/false);
        ic.relations = res.store.relations().names();
      }
      ic.relations.emplace_back(eg::kGroundingRelation);
      ic.relations.emplace_back(eg::kContextRelation);
      ic.dims = cli.dims;
      ic.num_bases = cli.num_bases;
      ic.self_loop = !cli.strict;
      ic.pooling = cli.attention ? eg::rgcn::PoolingMode::kAttention
                                 : eg::rgcn::PoolingMode::kMean;
      ic.text_dim = cli.text_dim > 0 ? cli.text_dim : static_cast<int>(c.embed_dim);
      ic.seed = c.seed;
      write_output(cli.out, eg::rgcn::random_params(ic).serialize());
    }
  } catch (const eg::Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail(eg::ErrorKind::kInvariant, e.what());
  }
  return 0;
}
