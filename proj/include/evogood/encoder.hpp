#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "evogood/autodiff.hpp"
#include "evogood/graph.hpp"
#include "evogood/kernels.hpp"

namespace evogood {

enum class Activation { relu, identity, tanh };
enum class KernelBackend { serial, parallel };

struct EncoderConfig {
  int input_dim = 0;
  int hidden_dim = 16;
  int layers = 2;
  int heads = 4;
  double negative_slope = 0.2;
  Activation activation = Activation::relu;
  KernelBackend backend = KernelBackend::parallel;
  std::uint64_t seed = 1;

  void check() const;
};

/// Learnable tensors of the spatio-temporal encoder. One attention vector pair
/// per layer; the input projection is shared by all timestamps.
struct EncoderParams {
  ad::Parameter w1;                 // d x d'
  ad::Parameter b;                  // 1 x d'
  std::vector<ad::Parameter> a_src;  // per layer, heads x d'
  std::vector<ad::Parameter> a_dst;

  static EncoderParams init(const EncoderConfig& cfg, std::mt19937_64& rng);
  std::vector<ad::Parameter*> all();
};

/// H: T matrices of shape N x d', entry t-1 holds h_v^t for every node v.
struct NodeRepresentationSequence {
  std::vector<Matrix> values;
  std::string produced_by;

  int timestamps() const { return static_cast<int>(values.size()); }
  int node_count() const { return values.empty() ? 0 : static_cast<int>(values[0].rows()); }
  int dim() const { return values.empty() ? 0 : static_cast<int>(values[0].cols()); }
  const Matrix& at(int t) const { return values.at(static_cast<std::size_t>(t - 1)); }
};

/// Fixed sinusoidal encoding of an integer timestamp: even slots sin(t / 10000^(2i/dim)),
/// odd slots cos of the same angle.
RowVector relative_time_encoding(int t, int dim);

/// Glorot-uniform matrix, limit sqrt(6 / (rows + cols)).
Matrix glorot_uniform(int rows, int cols, std::mt19937_64& rng);

/// Per-snapshot CSR topology with reverse edge index, built once per graph.
class GraphTopology {
 public:
  explicit GraphTopology(const DynamicGraph& g);
  const kernels::Csr& csr(int t) const { return csr_.at(static_cast<std::size_t>(t - 1)); }
  std::span<const int> reverse(int t) const { return reverse_.at(static_cast<std::size_t>(t - 1)); }

 private:
  std::vector<kernels::Csr> csr_;
  std::vector<std::vector<int>> reverse_;
};

// Value-level entry points.

/// sigma(W1^T (x + RTE(t)) + b) for every row of x.
Matrix project_features(const Matrix& x, int t, const EncoderConfig& cfg, const EncoderParams& params);
Matrix spatial_attention_layer(const Matrix& z, const Snapshot& snapshot, const Matrix& a_src, const Matrix& a_dst,
                               double negative_slope, KernelBackend backend = KernelBackend::parallel);
/// Per-destination attention weights averaged over heads, aligned with the snapshot's CSR order.
std::vector<double> attention_weights(const Matrix& z, const Snapshot& snapshot, const Matrix& a_src,
                                      const Matrix& a_dst, double negative_slope);
/// Causal running mean: h^t = (1/t) sum_{tau <= t} zhat^tau.
NodeRepresentationSequence temporal_aggregate(const std::vector<Matrix>& z_hat);
NodeRepresentationSequence encode(const DynamicGraph& g, const EncoderConfig& cfg, EncoderParams& params);

// Tape-level entry points (differentiable).

ad::Var attention(ad::Tape& tape, const ad::Var& z, const kernels::Csr& csr, std::span<const int> reverse,
                  const ad::Var& a_src, const ad::Var& a_dst, double negative_slope, KernelBackend backend);
std::vector<ad::Var> encode(ad::Tape& tape, const DynamicGraph& g, const GraphTopology& topo,
                            const EncoderConfig& cfg, EncoderParams& params);

std::string fingerprint(std::span<ad::Parameter* const> params);

}  // namespace evogood
