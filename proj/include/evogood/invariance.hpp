#pragma once

#include <utility>
#include <vector>

#include "evogood/autodiff.hpp"
#include "evogood/encoder.hpp"

namespace evogood {

struct InvarianceConfig {
  double delta = 0.1;   // gate threshold on per-dimension population variance
  double cutoff = 0.5;  // M_I above this marks an invariant dimension
  bool per_timestamp = false;
  bool layer_norm = true;

  void check() const;
};

/// Masks of one node (at one timestamp). M_V is always computed as 1 - M_I.
struct MaskPair {
  RowVector gate;
  RowVector m_i;
  RowVector m_v;
};

struct PatternIndices {
  std::vector<int> invariant;
  std::vector<int> variant;
};

/// gate[j] = 1 where the population variance of column j of the t x d' history is <= delta.
RowVector init_invariant_gate(const Matrix& h_prefix, double delta);
MaskPair masks(const Matrix& h_prefix, double delta, const RowVector& w_i);
MaskPair masks_from_gate(const RowVector& gate, const RowVector& w_i);
std::pair<RowVector, RowVector> split(const RowVector& h, const MaskPair& pair);
PatternIndices pattern_indices(const MaskPair& pair, double cutoff);

/// Row-wise layer normalisation (zero mean, unit variance across dimensions).
Matrix layer_normalize(const Matrix& x, double eps = 1e-5);

/// Gates for every node. Entry t-1 is the N x d' gate used at timestamp t.
/// With per_timestamp off every entry equals the gate of the full history.
std::vector<Matrix> compute_gates(const NodeRepresentationSequence& h, const InvarianceConfig& cfg);

/// M_I at timestamp t for all nodes: gate ⊙ sigmoid(w_i) broadcast over rows.
ad::Var invariant_mask(const ad::Var& w_i, const Matrix& gate);
/// H_I = M_I ⊙ H.
ad::Var invariant_part(const ad::Var& h, const ad::Var& m_i);

/// Variant-dimension indicator (1 where M_I <= cutoff) for every node.
Eigen::MatrixXi variant_indicator(const Matrix& m_i, double cutoff);

}  // namespace evogood
