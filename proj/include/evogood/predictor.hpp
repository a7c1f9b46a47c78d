#pragma once

#include <random>
#include <span>
#include <vector>

#include "evogood/autodiff.hpp"
#include "evogood/graph.hpp"
#include "evogood/nn.hpp"

namespace evogood {

enum class TaskKind { link, node };

/// Symmetric bilinear link scorer: logit(u, v) = (h_u P) . (h_v P) + b.
struct LinkPredictor {
  ad::Parameter proj;  // d' x d'
  ad::Parameter bias;  // 1 x 1

  static LinkPredictor init(int dim, std::mt19937_64& rng);
  ad::Var logits(ad::Tape& tape, const ad::Var& h, std::span<const int> us, std::span<const int> vs);
  Eigen::VectorXd logits(const Matrix& h, std::span<const int> us, std::span<const int> vs) const;
  void collect(std::vector<ad::Parameter*>& out);
};

/// Linear class head d' -> C.
struct NodePredictor {
  nn::Linear head;

  static NodePredictor init(int dim, int classes, std::mt19937_64& rng);
  ad::Var logits(ad::Tape& tape, const ad::Var& h, std::span<const int> nodes);
  Matrix logits(const Matrix& h, std::span<const int> nodes) const;
  void collect(std::vector<ad::Parameter*>& out);
};

/// Sorted set of undirected node pairs for membership tests.
class PairSet {
 public:
  PairSet() = default;
  explicit PairSet(const std::vector<Edge>& edges);
  bool contains(int u, int v) const;
  std::size_t size() const { return keys_.size(); }

 private:
  std::vector<long long> keys_;
};

/// `count` uniform node pairs u != v that are not in `existing`, sampled with rejection.
std::vector<Edge> sample_non_edges(int node_count, const PairSet& existing, std::size_t count, std::mt19937_64& rng);

}  // namespace evogood
