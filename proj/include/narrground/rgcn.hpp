#pragma once
// Forward pass of a relational graph convolution over a joint subgraph,
// graph pooling, and the text + graph scoring head.
//
// Relations are indexed 0..R-1 by name; with inverse relations enabled each
// edge u -r-> v also carries a message v -(R + r)-> u, so the effective
// relation count is 2R.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "narrground/retriever.hpp"

namespace narrground::rgcn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct RelEdge {
  std::uint32_t src = 0;
  std::uint32_t rel = 0;  // effective relation index
  std::uint32_t dst = 0;
};

struct RelationalGraph {
  std::size_t num_nodes = 0;
  std::vector<RelEdge> edges;
};

struct LayerParams {
  int num_bases = -1;            // -1: one full matrix per relation
  std::vector<Mat> weights;      // num_bases == -1: per relation, out x in
  std::vector<Mat> bases;        // num_bases > 0: out x in each
  Mat coefficients;              // relations x num_bases
  std::optional<Mat> self_loop;  // out x in
  Vec bias;                      // out

  Eigen::Index in_dim() const;
  Eigen::Index out_dim() const;
  std::size_t relation_count() const;
  // W_r, materialized from bases when decomposed.
  Mat relation_weight(std::size_t r) const;
};

enum class PoolingMode { kMean, kAttention };

struct MlpLayer {
  Mat weight;  // out x in
  Vec bias;
};

struct ScoreHead {
  std::optional<Mat> projection;  // text_dim x graph_dim
  std::vector<MlpLayer> mlp;      // rectifier between layers, scalar output
};

struct RgcnParams {
  std::vector<std::string> relations;  // base relation names
  bool inverse_relations = true;
  std::vector<LayerParams> layers;
  PoolingMode pooling = PoolingMode::kMean;
  Vec attention;  // graph_dim, attention pooling only
  ScoreHead head;

  std::size_t effective_relations() const {
    return relations.size() * (inverse_relations ? 2 : 1);
  }
  // Throws ConfigError when shapes do not chain.
  void validate() const;

  std::string serialize() const;
  static RgcnParams parse(std::string_view blob);
  static RgcnParams read(const std::string& path);
  void write(const std::string& path) const;
};

struct InitConfig {
  std::vector<std::string> relations;
  std::vector<int> dims;  // input, then one per layer
  int num_bases = -1;
  bool self_loop = true;
  bool inverse_relations = true;
  PoolingMode pooling = PoolingMode::kMean;
  int text_dim = 0;               // 0: same as final graph dim
  std::vector<int> hidden = {16};  // MLP hidden widths
  std::uint64_t seed = 0;
};

// Small uniform random weights from a seeded generator; for demos and tests.
RgcnParams random_params(const InitConfig& config);

// out_i = relu( sum_r 1/|N_r(i)| sum_{j in N_r(i)} W_r h_j + W_self h_i + b ),
// N_r(i) the in-neighbors of i under relation r.
Mat rgcn_layer(const RelationalGraph& graph, const Mat& features,
               const LayerParams& layer);

Mat forward(const RelationalGraph& graph, const Mat& features,
            const RgcnParams& params);

struct PooledGraph {
  Vec g;
  std::vector<double> weights;  // attention mode only
};

PooledGraph pool(const Mat& final_features, PoolingMode mode,
                 const Vec& attention = {});

double score(const Vec& text, const PooledGraph& pooled, const ScoreHead& head);

// Maps joint-graph edges onto effective relation indices.
RelationalGraph relational_graph(const JointSubgraph& graph,
                                 const RgcnParams& params);

struct ChoiceInput {
  Vec text;
  RelationalGraph graph;
  Mat features;  // rows in canonical node order
};

struct ChoiceScore {
  double logit = 0.0;
  PooledGraph pooled;
};

struct ChoiceDistribution {
  std::vector<ChoiceScore> choices;
  std::vector<double> probabilities;
  std::size_t argmax = 0;
};

ChoiceDistribution score_choices(std::span<const ChoiceInput> choices,
                                 const RgcnParams& params);

std::vector<double> softmax(std::span<const double> logits);

}  // namespace narrground::rgcn
