#include "evogood/predictor.hpp"

#include <algorithm>

#include "evogood/encoder.hpp"
#include "evogood/errors.hpp"

namespace evogood {

LinkPredictor LinkPredictor::init(int dim, std::mt19937_64& rng) {
  return {ad::Parameter("link.proj", glorot_uniform(dim, dim, rng)), ad::Parameter("link.bias", Matrix::Zero(1, 1))};
}

ad::Var LinkPredictor::logits(ad::Tape& tape, const ad::Var& h, std::span<const int> us, std::span<const int> vs) {
  if (us.size() != vs.size()) throw ContractViolation("link query: endpoint lists differ in length");
  ad::Var z = ad::matmul(h, tape.param(proj));
  ad::Var dot = ad::rowwise_dot(ad::gather_rows(z, us), ad::gather_rows(z, vs));
  return ad::add_row(dot, tape.param(bias));
}

Eigen::VectorXd LinkPredictor::logits(const Matrix& h, std::span<const int> us, std::span<const int> vs) const {
  if (us.size() != vs.size()) throw ContractViolation("link query: endpoint lists differ in length");
  const Matrix z = h * proj.value;
  Eigen::VectorXd out(static_cast<Eigen::Index>(us.size()));
  for (std::size_t i = 0; i < us.size(); ++i) {
    if (us[i] < 0 || us[i] >= h.rows() || vs[i] < 0 || vs[i] >= h.rows())
      throw ContractViolation("link query references an unknown node");
    out(static_cast<Eigen::Index>(i)) = z.row(us[i]).dot(z.row(vs[i])) + bias.value(0, 0);
  }
  return out;
}

void LinkPredictor::collect(std::vector<ad::Parameter*>& out) {
  out.push_back(&proj);
  out.push_back(&bias);
}

NodePredictor NodePredictor::init(int dim, int classes, std::mt19937_64& rng) {
  return {nn::Linear("node.head", dim, classes, rng)};
}

ad::Var NodePredictor::logits(ad::Tape& tape, const ad::Var& h, std::span<const int> nodes) {
  return head(tape, ad::gather_rows(h, nodes));
}

Matrix NodePredictor::logits(const Matrix& h, std::span<const int> nodes) const {
  Matrix rows(static_cast<Eigen::Index>(nodes.size()), h.cols());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i] < 0 || nodes[i] >= h.rows()) throw ContractViolation("class query references an unknown node");
    rows.row(static_cast<Eigen::Index>(i)) = h.row(nodes[i]);
  }
  return head.apply(rows);
}

void NodePredictor::collect(std::vector<ad::Parameter*>& out) { head.collect(out); }

namespace {
long long pair_key(int u, int v) {
  if (u > v) std::swap(u, v);
  return (static_cast<long long>(u) << 32) | static_cast<unsigned>(v);
}
}  // namespace

PairSet::PairSet(const std::vector<Edge>& edges) {
  keys_.reserve(edges.size());
  for (const Edge& e : edges) keys_.push_back(pair_key(e.u, e.v));
  std::sort(keys_.begin(), keys_.end());
  keys_.erase(std::unique(keys_.begin(), keys_.end()), keys_.end());
}

bool PairSet::contains(int u, int v) const { return std::binary_search(keys_.begin(), keys_.end(), pair_key(u, v)); }

std::vector<Edge> sample_non_edges(int node_count, const PairSet& existing, std::size_t count, std::mt19937_64& rng) {
  const double total_pairs = 0.5 * node_count * (node_count - 1.0);
  if (static_cast<double>(existing.size() + count) > total_pairs)
    throw ConfigError("not enough non-edges to sample " + std::to_string(count) + " negatives");
  std::uniform_int_distribution<int> pick(0, node_count - 1);
  std::vector<Edge> out;
  out.reserve(count);
  while (out.size() < count) {
    const int u = pick(rng), v = pick(rng);
    if (u == v || existing.contains(u, v)) continue;
    out.push_back({std::min(u, v), std::max(u, v)});
  }
  return out;
}

}  // namespace evogood
