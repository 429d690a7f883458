#include "narrground/rgcn.hpp"

#include <cmath>
#include <map>
#include <random>

#include "narrground/binary_io.hpp"
#include "narrground/error.hpp"

namespace narrground::rgcn {

namespace {

constexpr char kParamsMagic[4] = {'E', 'V', 'G', 'W'};
constexpr std::uint32_t kParamsVersion = 1;

constexpr std::uint32_t kFlagSelfLoop = 1u << 0;
constexpr std::uint32_t kFlagAttention = 1u << 1;
constexpr std::uint32_t kFlagInverse = 1u << 2;

void put_matrix(binio::Writer& w, const Mat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      w.put(static_cast<float>(m(r, c)));
    }
  }
}

Mat get_matrix(binio::Reader& r, Eigen::Index rows, Eigen::Index cols) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r.get<float>();
  }
  return m;
}

Vec get_vector(binio::Reader& r, Eigen::Index n) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = r.get<float>();
  return v;
}

void put_vector(binio::Writer& w, const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) w.put(static_cast<float>(v(i)));
}

Mat relu(Mat m) { return m.cwiseMax(0.0); }

void require(bool ok, const std::string& why) {
  if (!ok) throw ConfigError("rgcn parameters: " + why);
}

}  // namespace

Eigen::Index LayerParams::in_dim() const {
  if (num_bases < 0) return weights.empty() ? bias.size() : weights[0].cols();
  return bases.empty() ? 0 : bases[0].cols();
}

Eigen::Index LayerParams::out_dim() const { return bias.size(); }

std::size_t LayerParams::relation_count() const {
  return num_bases < 0 ? weights.size()
                       : static_cast<std::size_t>(coefficients.rows());
}

Mat LayerParams::relation_weight(std::size_t r) const {
  if (r >= relation_count()) {
    throw InvariantError("unknown relation index " + std::to_string(r));
  }
  if (num_bases < 0) return weights[r];
  Mat w = Mat::Zero(out_dim(), in_dim());
  for (std::size_t b = 0; b < bases.size(); ++b) {
    w += coefficients(static_cast<Eigen::Index>(r),
                      static_cast<Eigen::Index>(b)) * bases[b];
  }
  return w;
}

void RgcnParams::validate() const {
  require(!layers.empty(), "at least one layer required");
  const std::size_t rels = effective_relations();
  Eigen::Index dim = layers[0].in_dim();
  require(dim > 0, "input dimension must be positive");
  for (const auto& l : layers) {
    require(l.in_dim() == dim, "layer dimensions do not chain");
    require(l.out_dim() > 0, "layer output dimension must be positive");
    require(l.relation_count() == rels, "relation count mismatch");
    if (l.num_bases < 0) {
      for (const auto& w : l.weights) {
        require(w.rows() == l.out_dim() && w.cols() == dim, "weight shape");
      }
    } else {
      require(l.num_bases > 0 &&
                  l.bases.size() == static_cast<std::size_t>(l.num_bases),
              "basis count");
      require(l.coefficients.cols() == l.num_bases, "coefficient shape");
      for (const auto& b : l.bases) {
        require(b.rows() == l.out_dim() && b.cols() == dim, "basis shape");
      }
    }
    if (l.self_loop) {
      require(l.self_loop->rows() == l.out_dim() && l.self_loop->cols() == dim,
              "self-loop shape");
    }
    dim = l.out_dim();
  }
  if (pooling == PoolingMode::kAttention) {
    require(attention.size() == dim, "attention vector size");
  }
  Eigen::Index text_dim = dim;
  if (head.projection) {
    require(head.projection->cols() == dim, "projection input size");
    text_dim = head.projection->rows();
  }
  require(!head.mlp.empty(), "score head needs at least one layer");
  Eigen::Index width = text_dim;
  for (const auto& l : head.mlp) {
    require(l.weight.cols() == width && l.bias.size() == l.weight.rows(),
            "MLP shapes do not chain");
    width = l.weight.rows();
  }
  require(width == 1, "MLP must end in a scalar");
}

std::string RgcnParams::serialize() const {
  validate();
  binio::Writer w;
  w.put_bytes(std::string_view(kParamsMagic, 4));
  w.put(kParamsVersion);
  w.put(static_cast<std::uint32_t>(layers.size()));
  w.put(static_cast<std::uint32_t>(layers[0].in_dim()));
  for (const auto& l : layers) w.put(static_cast<std::uint32_t>(l.out_dim()));
  w.put(static_cast<std::uint32_t>(relations.size()));
  for (const auto& name : relations) w.put_string(name);
  const int num_bases = layers[0].num_bases;
  w.put(static_cast<std::int32_t>(num_bases));
  std::uint32_t flags = 0;
  if (layers[0].self_loop) flags |= kFlagSelfLoop;
  if (pooling == PoolingMode::kAttention) flags |= kFlagAttention;
  if (inverse_relations) flags |= kFlagInverse;
  w.put(flags);
  const auto graph_dim = layers.back().out_dim();
  const auto text_dim = head.projection ? head.projection->rows() : graph_dim;
  w.put(static_cast<std::uint32_t>(text_dim));
  w.put(static_cast<std::uint32_t>(head.mlp.size()));
  for (const auto& l : head.mlp) w.put(static_cast<std::uint32_t>(l.weight.rows()));

  for (const auto& l : layers) {
    if (l.num_bases != num_bases || l.self_loop.has_value() !=
                                        layers[0].self_loop.has_value()) {
      throw ConfigError("rgcn parameters: layers must share basis/self-loop layout");
    }
    if (num_bases < 0) {
      for (const auto& m : l.weights) put_matrix(w, m);
    } else {
      for (const auto& m : l.bases) put_matrix(w, m);
      put_matrix(w, l.coefficients);
    }
    if (l.self_loop) put_matrix(w, *l.self_loop);
    put_vector(w, l.bias);
  }
  if (pooling == PoolingMode::kAttention) put_vector(w, attention);
  if (head.projection) put_matrix(w, *head.projection);
  for (const auto& l : head.mlp) {
    put_matrix(w, l.weight);
    put_vector(w, l.bias);
  }
  return std::move(w).bytes();
}

RgcnParams RgcnParams::parse(std::string_view blob) {
  binio::Reader r(blob, "parameter file");
  if (r.get_bytes(4) != std::string_view(kParamsMagic, 4)) {
    throw FormatError("parameter file: bad magic (expected EVGW)");
  }
  auto version = r.get<std::uint32_t>();
  if (version != kParamsVersion) {
    throw FormatError("parameter file: unsupported version " +
                      std::to_string(version));
  }
  auto layer_count = r.get<std::uint32_t>();
  if (layer_count == 0 || layer_count > 64) {
    throw FormatError("parameter file: bad layer count");
  }
  std::vector<Eigen::Index> dims(layer_count + 1);
  for (auto& d : dims) d = r.get<std::uint32_t>();
  RgcnParams p;
  auto rel_count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < rel_count; ++i) p.relations.push_back(r.get_string());
  auto num_bases = r.get<std::int32_t>();
  auto flags = r.get<std::uint32_t>();
  p.inverse_relations = (flags & kFlagInverse) != 0;
  p.pooling = (flags & kFlagAttention) ? PoolingMode::kAttention : PoolingMode::kMean;
  const Eigen::Index text_dim = r.get<std::uint32_t>();
  auto mlp_count = r.get<std::uint32_t>();
  if (mlp_count == 0 || mlp_count > 64) {
    throw FormatError("parameter file: bad MLP layer count");
  }
  std::vector<Eigen::Index> mlp_out(mlp_count);
  for (auto& d : mlp_out) d = r.get<std::uint32_t>();
  // Reject sizes the blob cannot possibly hold before allocating.
  for (auto d : dims) {
    if (d > static_cast<Eigen::Index>(r.remaining())) {
      throw FormatError("parameter file: truncated");
    }
  }

  const auto rels = static_cast<Eigen::Index>(p.effective_relations());
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    LayerParams layer;
    layer.num_bases = num_bases;
    const auto in = dims[l], out = dims[l + 1];
    if (num_bases < 0) {
      for (Eigen::Index k = 0; k < rels; ++k) {
        layer.weights.push_back(get_matrix(r, out, in));
      }
    } else {
      for (int b = 0; b < num_bases; ++b) layer.bases.push_back(get_matrix(r, out, in));
      layer.coefficients = get_matrix(r, rels, num_bases);
    }
    if (flags & kFlagSelfLoop) layer.self_loop = get_matrix(r, out, in);
    layer.bias = get_vector(r, out);
    p.layers.push_back(std::move(layer));
  }
  const auto graph_dim = dims.back();
  if (p.pooling == PoolingMode::kAttention) p.attention = get_vector(r, graph_dim);
  if (text_dim != graph_dim) p.head.projection = get_matrix(r, text_dim, graph_dim);
  Eigen::Index width = text_dim;
  for (auto out : mlp_out) {
    MlpLayer l;
    l.weight = get_matrix(r, out, width);
    l.bias = get_vector(r, out);
    p.head.mlp.push_back(std::move(l));
    width = out;
  }
  if (r.remaining() != 0) throw FormatError("parameter file: trailing bytes");
  try {
    p.validate();
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  return p;
}

RgcnParams RgcnParams::read(const std::string& path) {
  return parse(binio::read_file(path));
}

void RgcnParams::write(const std::string& path) const {
  binio::write_file(path, serialize());
}

RgcnParams random_params(const InitConfig& config) {
  if (config.dims.size() < 2) throw ConfigError("need input and layer dims");
  std::mt19937_64 rng(config.seed);
  // Uniform in [-scale, scale) from the raw 64-bit stream.
  auto uniform = [&](double scale) {
    return (static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0) * scale;
  };
  auto random_matrix = [&](Eigen::Index rows, Eigen::Index cols) {
    Mat m(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        m(i, j) = static_cast<float>(uniform(scale));
      }
    }
    return m;
  };
  auto random_vector = [&](Eigen::Index n, double scale) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = static_cast<float>(uniform(scale));
    return v;
  };

  RgcnParams p;
  p.relations = config.relations;
  p.inverse_relations = config.inverse_relations;
  p.pooling = config.pooling;
  const auto rels = static_cast<Eigen::Index>(p.effective_relations());
  for (std::size_t l = 0; l + 1 < config.dims.size(); ++l) {
    const Eigen::Index in = config.dims[l], out = config.dims[l + 1];
    LayerParams layer;
    layer.num_bases = config.num_bases;
    if (config.num_bases < 0) {
      for (Eigen::Index k = 0; k < rels; ++k) {
        layer.weights.push_back(random_matrix(out, in));
      }
    } else {
      for (int b = 0; b < config.num_bases; ++b) {
        layer.bases.push_back(random_matrix(out, in));
      }
      layer.coefficients = random_matrix(rels, config.num_bases);
    }
    if (config.self_loop) layer.self_loop = random_matrix(out, in);
    layer.bias = random_vector(out, 0.1);
    p.layers.push_back(std::move(layer));
  }
  const Eigen::Index graph_dim = config.dims.back();
  if (p.pooling == PoolingMode::kAttention) p.attention = random_vector(graph_dim, 1.0);
  Eigen::Index width = graph_dim;
  if (config.text_dim > 0 && config.text_dim != graph_dim) {
    p.head.projection = random_matrix(config.text_dim, graph_dim);
    width = config.text_dim;
  }
  std::vector<int> outs = config.hidden;
  outs.push_back(1);
  for (int out : outs) {
    p.head.mlp.push_back({random_matrix(out, width), random_vector(out, 0.1)});
    width = out;
  }
  p.validate();
  return p;
}

Mat rgcn_layer(const RelationalGraph& graph, const Mat& features,
               const LayerParams& layer) {
  const auto n = static_cast<Eigen::Index>(graph.num_nodes);
  if (features.rows() != n) {
    throw InvariantError("feature rows (" + std::to_string(features.rows()) +
                         ") != node count (" + std::to_string(n) + ")");
  }
  if (features.cols() != layer.in_dim()) {
    throw InvariantError("feature width does not match layer input");
  }
  const std::size_t rels = layer.relation_count();

  // |N_r(i)| per (relation, node); relations without edges are skipped.
  std::map<std::uint32_t, std::vector<int>> degree;
  for (const auto& e : graph.edges) {
    if (e.rel >= rels) {
      throw InvariantError("unknown relation index " + std::to_string(e.rel));
    }
    if (e.src >= graph.num_nodes || e.dst >= graph.num_nodes) {
      throw InvariantError("edge endpoint out of range");
    }
    auto& d = degree[e.rel];
    if (d.empty()) d.assign(graph.num_nodes, 0);
    ++d[e.dst];
  }

  Mat out = Mat::Zero(n, layer.out_dim());
  for (const auto& [rel, deg] : degree) {
    const Mat projected = features * layer.relation_weight(rel).transpose();
    for (const auto& e : graph.edges) {
      if (e.rel != rel) continue;
      out.row(e.dst) += projected.row(e.src) / static_cast<double>(deg[e.dst]);
    }
  }
  if (layer.self_loop) out += features * layer.self_loop->transpose();
  out.rowwise() += layer.bias.transpose();
  return relu(std::move(out));
}

Mat forward(const RelationalGraph& graph, const Mat& features,
            const RgcnParams& params) {
  Mat h = features;
  for (const auto& layer : params.layers) h = rgcn_layer(graph, h, layer);
  return h;
}

PooledGraph pool(const Mat& h, PoolingMode mode, const Vec& attention) {
  PooledGraph out;
  out.g = Vec::Zero(h.cols());
  if (h.rows() == 0) return out;
  if (mode == PoolingMode::kMean) {
    out.g = h.colwise().mean().transpose();
    return out;
  }
  if (attention.size() != h.cols()) {
    throw InvariantError("attention vector size does not match features");
  }
  const Vec scores = h * attention;
  const double top = scores.maxCoeff();
  Vec e = (scores.array() - top).exp().matrix();
  e /= e.sum();
  out.weights.assign(e.data(), e.data() + e.size());
  out.g = h.transpose() * e;
  return out;
}

double score(const Vec& text, const PooledGraph& pooled, const ScoreHead& head) {
  Vec g = head.projection ? Vec(*head.projection * pooled.g) : pooled.g;
  if (g.size() != text.size()) {
    throw InvariantError("text dimension " + std::to_string(text.size()) +
                         " != graph dimension " + std::to_string(g.size()) +
                         " and no projection is configured");
  }
  Vec x = text + g;
  for (std::size_t i = 0; i < head.mlp.size(); ++i) {
    const auto& l = head.mlp[i];
    if (l.weight.cols() != x.size()) throw InvariantError("MLP input size");
    x = l.weight * x + l.bias;
    if (i + 1 < head.mlp.size()) x = x.cwiseMax(0.0);
  }
  if (x.size() != 1) throw InvariantError("MLP must end in a scalar");
  if (!std::isfinite(x(0))) throw InvariantError("non-finite logit");
  return x(0);
}

RelationalGraph relational_graph(const JointSubgraph& graph,
                                 const RgcnParams& params) {
  std::map<std::string_view, std::uint32_t> rel_index;
  for (std::size_t r = 0; r < params.relations.size(); ++r) {
    rel_index.emplace(params.relations[r], static_cast<std::uint32_t>(r));
  }
  std::map<std::string_view, std::uint32_t> node_index;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    node_index.emplace(graph.nodes[i].id, static_cast<std::uint32_t>(i));
  }
  const auto base = static_cast<std::uint32_t>(params.relations.size());
  RelationalGraph out;
  out.num_nodes = graph.nodes.size();
  for (const auto& e : graph.edges) {
    auto rel = rel_index.find(e.rel);
    if (rel == rel_index.end()) {
      throw InvariantError("relation '" + e.rel + "' unknown to the parameters");
    }
    auto src = node_index.at(e.src);
    auto dst = node_index.at(e.dst);
    out.edges.push_back({src, rel->second, dst});
    if (params.inverse_relations) out.edges.push_back({dst, base + rel->second, src});
  }
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  double top = logits[0];
  for (double v : logits) top = std::max(top, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

ChoiceDistribution score_choices(std::span<const ChoiceInput> choices,
                                 const RgcnParams& params) {
  if (choices.size() < 2) throw ConfigError("need at least two choices");
  ChoiceDistribution dist;
  std::vector<double> logits;
  for (const auto& c : choices) {
    auto h = forward(c.graph, c.features, params);
    ChoiceScore s;
    s.pooled = pool(h, params.pooling, params.attention);
    s.logit = score(c.text, s.pooled, params.head);
    logits.push_back(s.logit);
    dist.choices.push_back(std::move(s));
  }
  dist.probabilities = softmax(logits);
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[dist.argmax]) dist.argmax = i;
  }
  return dist;
}

}  // namespace narrground::rgcn
