#pragma once
// Anchor-event matching: nearest KG node by L2 distance over precomputed
// sentence embeddings, accepted only under a distance threshold.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "narrground/event_model.hpp"
#include "narrground/kg_store.hpp"

namespace narrground {

inline constexpr double kDefaultThreshold = 0.65;

struct EmbeddingMatrix {
  std::uint32_t dim = 0;
  std::vector<std::uint64_t> ids;  // one per row
  std::vector<float> values;       // row-major, ids.size() * dim

  std::size_t count() const { return ids.size(); }
  std::span<const float> row(std::size_t i) const {
    return {values.data() + i * dim, dim};
  }

  // Throws ConfigError for dim == 0 or non-finite values.
  void validate() const;
  // Rows must be ids 0..N-1 in order, N == node count of the store.
  void check_attached_to(const KgStore& store) const;

  std::string serialize() const;
  static EmbeddingMatrix parse(std::string_view blob);
  static EmbeddingMatrix read(const std::string& path);
  void write(const std::string& path) const;
};

enum class SearchBackend { kExact, kApproximate };

std::string_view backend_name(SearchBackend backend);

// Inverted-file parameters for the approximate backend; zero means "pick
// from the row count".
struct IndexParams {
  std::size_t lists = 0;
  std::size_t probes = 0;
  std::uint64_t seed = 0;
  int kmeans_iterations = 12;
};

struct Match {
  NodeId node = 0;
  double distance = 0.0;
};

class EventIndex {
 public:
  static EventIndex build(EmbeddingMatrix matrix, SearchBackend backend,
                          IndexParams params = {});

  // Best candidate regardless of threshold. Exact backend: global argmin,
  // ties to the smallest row. Throws InvariantError on dimension mismatch.
  std::optional<Match> nearest(std::span<const float> query) const;

  SearchBackend backend() const { return backend_; }
  std::uint32_t dim() const { return matrix_.dim; }
  std::size_t size() const { return matrix_.count(); }
  const EmbeddingMatrix& matrix() const { return matrix_; }
  const IndexParams& params() const { return params_; }

 private:
  EmbeddingMatrix matrix_;
  SearchBackend backend_ = SearchBackend::kExact;
  IndexParams params_;
  std::vector<float> centroids_;               // lists * dim
  std::vector<std::vector<std::uint32_t>> lists_;
};

std::optional<Match> match_event(const EventIndex& index,
                                 std::span<const float> query,
                                 double threshold = kDefaultThreshold);

struct AnchorMatch {
  FrameRef event;
  int level = 0;
  NodeId node = 0;
  double distance = 0.0;

  bool operator==(const AnchorMatch&) const = default;
};

struct EventAnchors {
  FrameRef event;
  std::vector<AnchorMatch> matches;  // strictly increasing level

  bool operator==(const EventAnchors&) const = default;
};

// Sorted by event; events without any accepted match are absent.
struct AnchorSets {
  std::vector<EventAnchors> events;

  std::size_t match_count() const;
  // Distinct anchor node ids of one event, ascending.
  static std::vector<NodeId> nodes_of(const EventAnchors& anchors);
  bool operator==(const AnchorSets&) const = default;
};

struct GroundQuery {
  FrameRef event;
  int level = 0;
  std::vector<float> vector;
};

// Matches every query independently and groups accepted matches by event.
// `threads` only changes scheduling, never the result.
AnchorSets ground(const EventIndex& index, std::span<const GroundQuery> queries,
                  double threshold = kDefaultThreshold, unsigned threads = 1);

struct SentenceQuery {
  std::string doc_id;
  int sent_idx = 0;
  std::vector<float> vector;
};

// Whole-sentence grounding; results use frame_idx = -1 and level 0.
AnchorSets sentence_ground(const EventIndex& index,
                           std::span<const SentenceQuery> sentences,
                           double threshold = kDefaultThreshold,
                           unsigned threads = 1);

struct GroundingStats {
  std::uint64_t queries = 0;
  std::uint64_t hits = 0;
  double hit_rate = 0.0;
  std::optional<double> mean_distance;
};

GroundingStats grounding_stats(const AnchorSets& anchors,
                               std::uint64_t total_queries);

// Deterministic stand-in for a sentence encoder: signed feature hashing of
// lowercased whitespace tokens, L2-normalized. For tests and demos only.
class HashingEmbedder {
 public:
  explicit HashingEmbedder(std::uint32_t dim = 64);
  std::vector<float> embed(std::string_view text) const;
  EmbeddingMatrix embed_all(std::span<const std::string> texts) const;
  std::uint32_t dim() const { return dim_; }

 private:
  std::uint32_t dim_;
};

}  // namespace narrground
