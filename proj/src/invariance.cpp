#include "evogood/invariance.hpp"

#include "evogood/errors.hpp"

namespace evogood {

void InvarianceConfig::check() const {
  if (delta < 0) throw ConfigError("delta must be non-negative");
  if (cutoff <= 0 || cutoff >= 1) throw ConfigError("cutoff must lie in (0, 1)");
}

RowVector init_invariant_gate(const Matrix& h_prefix, double delta) {
  if (h_prefix.rows() < 1) throw ContractViolation("gate needs at least one history entry");
  const RowVector mean = h_prefix.colwise().mean();
  const RowVector var = (h_prefix.rowwise() - mean).array().square().colwise().mean();
  RowVector gate(h_prefix.cols());
  for (Eigen::Index j = 0; j < gate.size(); ++j) gate(j) = var(j) <= delta ? 1.0 : 0.0;
  return gate;
}

MaskPair masks_from_gate(const RowVector& gate, const RowVector& w_i) {
  if (gate.size() != w_i.size()) throw ContractViolation("W_I dimension does not match the gate");
  MaskPair p;
  p.gate = gate;
  const RowVector sig = (1.0 + (-w_i.array()).exp()).inverse().matrix();
  p.m_i = gate.cwiseProduct(sig);
  p.m_v = (1.0 - p.m_i.array()).matrix();
  return p;
}

MaskPair masks(const Matrix& h_prefix, double delta, const RowVector& w_i) {
  return masks_from_gate(init_invariant_gate(h_prefix, delta), w_i);
}

std::pair<RowVector, RowVector> split(const RowVector& h, const MaskPair& pair) {
  if (h.size() != pair.m_i.size()) throw ContractViolation("split: shape mismatch");
  return {h.cwiseProduct(pair.m_i), h.cwiseProduct(pair.m_v)};
}

PatternIndices pattern_indices(const MaskPair& pair, double cutoff) {
  PatternIndices out;
  for (Eigen::Index j = 0; j < pair.m_i.size(); ++j)
    (pair.m_i(j) > cutoff ? out.invariant : out.variant).push_back(static_cast<int>(j));
  return out;
}

Matrix layer_normalize(const Matrix& x, double eps) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    out.row(i) = (x.row(i).array() - mean) / std::sqrt(var + eps);
  }
  return out;
}

std::vector<Matrix> compute_gates(const NodeRepresentationSequence& h, const InvarianceConfig& cfg) {
  const int T = h.timestamps(), n = h.node_count(), d = h.dim();
  std::vector<Matrix> normed;
  for (const Matrix& m : h.values) normed.push_back(cfg.layer_norm ? layer_normalize(m) : m);
  std::vector<Matrix> gates;
  if (T == 0) return gates;

  auto gate_at = [&](int upto) {
    // Two-pass population variance over the first `upto` timestamps, per node and dimension.
    Matrix mean = Matrix::Zero(n, d), var = Matrix::Zero(n, d);
    for (int t = 0; t < upto; ++t) mean += normed[static_cast<std::size_t>(t)];
    mean /= upto;
    for (int t = 0; t < upto; ++t) var += (normed[static_cast<std::size_t>(t)] - mean).array().square().matrix();
    var /= upto;
    return Matrix((var.array() <= cfg.delta).cast<double>());
  };

  if (cfg.per_timestamp) {
    for (int t = 1; t <= T; ++t) gates.push_back(gate_at(t));
  } else {
    Matrix g = gate_at(T);
    gates.assign(static_cast<std::size_t>(T), g);
  }
  return gates;
}

ad::Var invariant_mask(const ad::Var& w_i, const Matrix& gate) {
  if (w_i.cols() != gate.cols()) throw ContractViolation("W_I width does not match the gate");
  std::vector<int> rows(static_cast<std::size_t>(gate.rows()), 0);
  return ad::mul_const(ad::gather_rows(ad::sigmoid(w_i), rows), gate);
}

ad::Var invariant_part(const ad::Var& h, const ad::Var& m_i) { return ad::mul(h, m_i); }

Eigen::MatrixXi variant_indicator(const Matrix& m_i, double cutoff) {
  return (m_i.array() <= cutoff).cast<int>();
}

}  // namespace evogood
