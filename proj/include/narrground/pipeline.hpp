#pragma once
// End-to-end stages shared by the CLI and the Python bindings. Every stage
// returns its records in canonical order so that chaining the individual
// stages reproduces the one-shot pipeline byte for byte.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "narrground/event_model.hpp"
#include "narrground/kg_store.hpp"
#include "narrground/matcher.hpp"
#include "narrground/retriever.hpp"
#include "narrground/rgcn.hpp"
#include "narrground/serializer.hpp"

namespace narrground::pipeline {

using json = nlohmann::ordered_json;

struct Config {
  std::string kg_nodes;
  std::string kg_edges;
  std::string kg_snapshot;
  std::string embeddings;        // EVGE rows for KG nodes
  std::string query_embeddings;  // EVGE rows for partial-event records
  std::string events;            // SRL frames
  std::string sentences;         // raw documents, whole-sentence mode
  std::string tasks;             // multiple-choice tasks
  std::string params;            // EVGW scorer parameters
  std::string out_dir;

  double threshold = kDefaultThreshold;
  int hops = kDefaultHopLimit;
  AbstractionCap cap = AbstractionCap::kArg1;
  bool no_extract = false;
  bool no_norm = false;
  bool no_pie = false;
  SerializationVariant variant = SerializationVariant::kNodeEdge;
  bool relation_labels = false;
  std::uint32_t embed_dim = 64;
  SearchBackend backend = SearchBackend::kExact;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  int top_k = 10;  // attention nodes reported per choice

  // Applies implications (no_extract => no_pie) and range checks.
  void finalize();
  AbstractionCap effective_cap() const;
  std::string mode() const;
  // Stamp carried by every record derived from embeddings.
  json meta() const;
  bool fallback_embedder() const { return embeddings.empty(); }
};

struct PartialRecord {
  FrameRef ref;
  int level = 0;
  std::string plain;
  std::string tagged;
};

struct Task {
  std::string instance_id;
  std::string question;
  std::vector<std::string> choices;  // doc ids
};

// --- inputs ---------------------------------------------------------------
std::vector<SrlFrame> read_frames(const std::string& path);
std::vector<NormalizedEvent> read_normalized(const std::string& path);
std::vector<PartialRecord> read_partials(const std::string& path);
AnchorSets read_anchors(const std::string& path);
std::vector<JointSubgraph> read_joint(const std::string& path);
std::vector<SentenceQuery> read_sentence_texts(const std::string& path,
                                               std::vector<ContextEvent>& out);
std::vector<Task> read_tasks(const std::string& path);

// --- stages ---------------------------------------------------------------
// Per document: person index, then per-frame normalization (or passthrough
// when skip_person_tokens). Output sorted by frame ref.
std::vector<NormalizedEvent> normalize_frames(std::span<const SrlFrame> frames,
                                              bool skip_person_tokens,
                                              unsigned threads = 1);
std::vector<PartialRecord> extract_partials(
    std::span<const NormalizedEvent> events, AbstractionCap cap);

struct Resources {
  KgStore store;
  std::optional<EventIndex> index;
  HashingEmbedder embedder{64};
};

// Loads the store and, unless `with_index` is false, the embedding index
// (from the embedding file, or the fallback embedder over node texts).
Resources load_resources(const Config& config, bool with_index = true);

AnchorSets ground_partials(const Resources& res,
                           std::span<const PartialRecord> partials,
                           const Config& config);
AnchorSets ground_sentences(const Resources& res,
                            std::span<const SentenceQuery> sentences,
                            const Config& config);

// Context events per document from normalized events (plain rendering).
std::vector<ContextEvent> context_events(std::span<const NormalizedEvent> events);

// One joint graph per document present in `contexts`, sorted by doc id.
std::vector<JointSubgraph> build_joint_graphs(const KgStore& store,
                                              std::span<const ContextEvent> contexts,
                                              const AnchorSets& anchors,
                                              const Config& config);

// --- record encoders (canonical order in, JSON lines out) ------------------
std::vector<json> normalized_records(std::span<const NormalizedEvent> events);
std::vector<json> partial_records(std::span<const PartialRecord> partials);
std::vector<json> anchor_records(const AnchorSets& anchors, const Config& config);
std::vector<json> joint_records(std::span<const JointSubgraph> graphs,
                                const Config& config);
std::vector<json> serialize_records(std::span<const JointSubgraph> graphs,
                                    std::span<const Task> tasks,
                                    const Config& config);
std::vector<json> score_records(std::span<const JointSubgraph> graphs,
                                std::span<const Task> tasks,
                                const rgcn::RgcnParams& params,
                                const Resources& res, const Config& config);

json stats_record(std::uint64_t queries, std::size_t source_events,
                  const AnchorSets& anchors,
                  std::span<const JointSubgraph> graphs, const Config& config);

// Node features for scoring: KG rows from the embedding file when present,
// otherwise the fallback embedder over node texts.
rgcn::Mat node_features(const JointSubgraph& graph, const Resources& res,
                        const Config& config);

// Writes every stage into config.out_dir; returns the written file names.
// Files from a failed run are removed before the error propagates.
std::vector<std::string> run_pipeline(const Config& config);

}  // namespace narrground::pipeline
