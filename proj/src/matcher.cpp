#include "narrground/matcher.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <tuple>

#include "narrground/binary_io.hpp"
#include "narrground/error.hpp"
#include "narrground/parallel.hpp"

namespace narrground {

namespace {

constexpr char kEmbeddingMagic[4] = {'E', 'V', 'G', 'E'};
constexpr std::uint32_t kEmbeddingVersion = 1;

double squared_l2(std::span<const float> a, std::span<const float> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return sum;
}

// Updates (best, best_sq) with row `row` when strictly closer, or equally
// close with a smaller id.
inline void consider(const EmbeddingMatrix& m, std::span<const float> q,
                     std::uint32_t row, std::uint32_t& best, double& best_sq) {
  double d = squared_l2(q, m.row(row));
  if (d < best_sq || (d == best_sq && row < best)) {
    best = row;
    best_sq = d;
  }
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void sort_and_group(std::vector<AnchorMatch>& matches, AnchorSets& out) {
  std::sort(matches.begin(), matches.end(), [](const auto& a, const auto& b) {
    return std::tie(a.event, a.level) < std::tie(b.event, b.level);
  });
  for (auto& m : matches) {
    if (out.events.empty() || out.events.back().event != m.event) {
      out.events.push_back({m.event, {}});
    }
    auto& group = out.events.back().matches;
    if (!group.empty() && group.back().level == m.level) {
      throw InvariantError("duplicate query for one (event, level)");
    }
    group.push_back(std::move(m));
  }
}

}  // namespace

void EmbeddingMatrix::validate() const {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  if (values.size() != ids.size() * dim) {
    throw ConfigError("embedding matrix size does not match count * dim");
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw ConfigError("embedding contains non-finite values");
  }
}

void EmbeddingMatrix::check_attached_to(const KgStore& store) const {
  if (count() != store.node_count()) {
    throw ConfigError("embedding rows (" + std::to_string(count()) +
                      ") != KG nodes (" + std::to_string(store.node_count()) +
                      ")");
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] != i) {
      throw ConfigError("embedding ids must be the identity permutation");
    }
  }
}

std::string EmbeddingMatrix::serialize() const {
  binio::Writer w;
  w.put_bytes(std::string_view(kEmbeddingMagic, 4));
  w.put(kEmbeddingVersion);
  w.put(static_cast<std::uint64_t>(count()));
  w.put(dim);
  w.put_array(std::span<const std::uint64_t>(ids));
  w.put_array(std::span<const float>(values));
  return std::move(w).bytes();
}

EmbeddingMatrix EmbeddingMatrix::parse(std::string_view blob) {
  binio::Reader r(blob, "embedding file");
  if (r.get_bytes(4) != std::string_view(kEmbeddingMagic, 4)) {
    throw FormatError("embedding file: bad magic (expected EVGE)");
  }
  auto version = r.get<std::uint32_t>();
  if (version != kEmbeddingVersion) {
    throw FormatError("embedding file: unsupported version " +
                      std::to_string(version));
  }
  auto count = r.get<std::uint64_t>();
  EmbeddingMatrix m;
  m.dim = r.get<std::uint32_t>();
  if (count > r.remaining() / 8 ||
      (m.dim > 0 && count * m.dim > r.remaining() / 4)) {
    throw FormatError("embedding file: truncated");
  }
  m.ids.resize(count);
  r.get_array(std::span<std::uint64_t>(m.ids));
  m.values.resize(count * m.dim);
  r.get_array(std::span<float>(m.values));
  if (r.remaining() != 0) throw FormatError("embedding file: trailing bytes");
  return m;
}

EmbeddingMatrix EmbeddingMatrix::read(const std::string& path) {
  return parse(binio::read_file(path));
}

void EmbeddingMatrix::write(const std::string& path) const {
  binio::write_file(path, serialize());
}

std::string_view backend_name(SearchBackend backend) {
  return backend == SearchBackend::kExact ? "exact" : "approximate";
}

EventIndex EventIndex::build(EmbeddingMatrix matrix, SearchBackend backend,
                             IndexParams params) {
  matrix.validate();
  if (matrix.count() > std::numeric_limits<std::uint32_t>::max()) {
    throw ConfigError("embedding matrix too large");
  }
  EventIndex index;
  index.backend_ = backend;
  const std::size_t n = matrix.count();
  const std::uint32_t dim = matrix.dim;
  if (backend == SearchBackend::kApproximate && n > 0) {
    std::size_t lists = params.lists;
    if (lists == 0) {
      lists = std::max<std::size_t>(1, static_cast<std::size_t>(
                                           std::sqrt(static_cast<double>(n))));
    }
    lists = std::min(lists, n);
    if (params.probes == 0) params.probes = std::max<std::size_t>(1, lists / 2);
    params.probes = std::min(params.probes, lists);
    params.lists = lists;

    // Seeds: a partial Fisher-Yates draw over row ids. mt19937_64 output is
    // fixed by the standard, so the layout is reproducible across platforms.
    std::mt19937_64 rng(params.seed);
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    for (std::size_t i = 0; i < lists; ++i) {
      std::swap(order[i], order[i + rng() % (n - i)]);
    }
    std::vector<float> centroids(lists * dim);
    for (std::size_t c = 0; c < lists; ++c) {
      auto row = matrix.row(order[c]);
      std::copy(row.begin(), row.end(), centroids.begin() + c * dim);
    }
    std::vector<std::uint32_t> assign(n, 0);
    auto centroid = [&](std::size_t c) {
      return std::span<const float>(centroids.data() + c * dim, dim);
    };
    for (int iter = 0; iter <= params.kmeans_iterations; ++iter) {
      for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < lists; ++c) {
          double d = squared_l2(matrix.row(i), centroid(c));
          if (d < best) {
            best = d;
            assign[i] = static_cast<std::uint32_t>(c);
          }
        }
      }
      if (iter == params.kmeans_iterations) break;
      std::vector<double> sums(lists * dim, 0.0);
      std::vector<std::size_t> sizes(lists, 0);
      for (std::size_t i = 0; i < n; ++i) {
        auto row = matrix.row(i);
        ++sizes[assign[i]];
        for (std::uint32_t k = 0; k < dim; ++k) sums[assign[i] * dim + k] += row[k];
      }
      for (std::size_t c = 0; c < lists; ++c) {
        if (sizes[c] == 0) continue;  // empty cluster keeps its centroid
        for (std::uint32_t k = 0; k < dim; ++k) {
          centroids[c * dim + k] =
              static_cast<float>(sums[c * dim + k] / static_cast<double>(sizes[c]));
        }
      }
    }
    index.lists_.assign(lists, {});
    for (std::size_t i = 0; i < n; ++i) {
      index.lists_[assign[i]].push_back(static_cast<std::uint32_t>(i));
    }
    index.centroids_ = std::move(centroids);
  }
  index.params_ = params;
  index.matrix_ = std::move(matrix);
  return index;
}

std::optional<Match> EventIndex::nearest(std::span<const float> query) const {
  if (query.size() != matrix_.dim) {
    throw InvariantError("query dimension " + std::to_string(query.size()) +
                         " != index dimension " + std::to_string(matrix_.dim));
  }
  const std::size_t n = matrix_.count();
  if (n == 0) return std::nullopt;
  std::uint32_t best = std::numeric_limits<std::uint32_t>::max();
  double best_sq = std::numeric_limits<double>::infinity();
  if (backend_ == SearchBackend::kExact) {
    for (std::uint32_t i = 0; i < n; ++i) consider(matrix_, query, i, best, best_sq);
  } else {
    const std::size_t lists = lists_.size();
    std::vector<std::pair<double, std::size_t>> ranked(lists);
    for (std::size_t c = 0; c < lists; ++c) {
      ranked[c] = {squared_l2(query, {centroids_.data() + c * matrix_.dim,
                                      matrix_.dim}),
                   c};
    }
    std::partial_sort(ranked.begin(), ranked.begin() + params_.probes,
                      ranked.end());
    for (std::size_t p = 0; p < params_.probes; ++p) {
      for (auto row : lists_[ranked[p].second]) {
        consider(matrix_, query, row, best, best_sq);
      }
    }
    if (best == std::numeric_limits<std::uint32_t>::max()) return std::nullopt;
  }
  return Match{static_cast<NodeId>(matrix_.ids[best]), std::sqrt(best_sq)};
}

std::optional<Match> match_event(const EventIndex& index,
                                 std::span<const float> query,
                                 double threshold) {
  if (!(threshold >= 0.0)) throw ConfigError("threshold must be >= 0");
  auto best = index.nearest(query);
  if (!best || best->distance > threshold) return std::nullopt;
  return best;
}

std::size_t AnchorSets::match_count() const {
  std::size_t n = 0;
  for (const auto& e : events) n += e.matches.size();
  return n;
}

std::vector<NodeId> AnchorSets::nodes_of(const EventAnchors& anchors) {
  std::vector<NodeId> nodes;
  for (const auto& m : anchors.matches) nodes.push_back(m.node);
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return nodes;
}

AnchorSets ground(const EventIndex& index, std::span<const GroundQuery> queries,
                  double threshold, unsigned threads) {
  std::vector<std::optional<Match>> results(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) {
    results[i] = match_event(index, queries[i].vector, threshold);
  });
  std::vector<AnchorMatch> accepted;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (results[i]) {
      accepted.push_back({queries[i].event, queries[i].level, results[i]->node,
                          results[i]->distance});
    }
  }
  AnchorSets out;
  sort_and_group(accepted, out);
  return out;
}

AnchorSets sentence_ground(const EventIndex& index,
                           std::span<const SentenceQuery> sentences,
                           double threshold, unsigned threads) {
  std::vector<GroundQuery> queries;
  queries.reserve(sentences.size());
  for (const auto& s : sentences) {
    queries.push_back({{s.doc_id, s.sent_idx, -1}, 0, s.vector});
  }
  return ground(index, queries, threshold, threads);
}

GroundingStats grounding_stats(const AnchorSets& anchors,
                               std::uint64_t total_queries) {
  GroundingStats stats;
  stats.queries = total_queries;
  stats.hits = anchors.match_count();
  if (stats.hits > stats.queries) {
    throw InvariantError("more hits than queries");
  }
  if (total_queries > 0) {
    stats.hit_rate = static_cast<double>(stats.hits) /
                     static_cast<double>(total_queries);
  }
  if (stats.hits > 0) {
    double sum = 0.0;
    for (const auto& e : anchors.events) {
      for (const auto& m : e.matches) sum += m.distance;
    }
    stats.mean_distance = sum / static_cast<double>(stats.hits);
  }
  return stats;
}

HashingEmbedder::HashingEmbedder(std::uint32_t dim) : dim_(dim) {
  if (dim == 0) throw ConfigError("embedder dimension must be positive");
}

std::vector<float> HashingEmbedder::embed(std::string_view text) const {
  std::vector<double> acc(dim_, 0.0);
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) {
    for (auto& c : tok) {
      c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    auto h = fnv1a(tok);
    acc[h % dim_] += (h >> 63) ? -1.0 : 1.0;
  }
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  std::vector<float> out(dim_, 0.0f);
  if (norm > 0.0) {
    for (std::uint32_t i = 0; i < dim_; ++i) {
      out[i] = static_cast<float>(acc[i] / norm);
    }
  }
  return out;
}

EmbeddingMatrix HashingEmbedder::embed_all(
    std::span<const std::string> texts) const {
  EmbeddingMatrix m;
  m.dim = dim_;
  m.ids.resize(texts.size());
  m.values.reserve(texts.size() * dim_);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    m.ids[i] = i;
    auto v = embed(texts[i]);
    m.values.insert(m.values.end(), v.begin(), v.end());
  }
  return m;
}

}  // namespace narrground
