#include "evogood/autodiff.hpp"

#include <cmath>

#include "evogood/errors.hpp"

namespace evogood::ad {

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Parameter& p) {
  Node n{p.value, {}, grad_enabled_, {}, grad_enabled_ ? &p : nullptr};
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, bool needs_grad, Backward backward) {
  const bool track = grad_enabled_ && needs_grad;
  nodes_.push_back(Node{std::move(value), {}, track, track ? std::move(backward) : Backward{}, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

bool Tape::any_needs_grad(std::initializer_list<Var> vs) const {
  if (!grad_enabled_) return false;
  for (const Var& v : vs)
    if (nodes_[static_cast<std::size_t>(v.id_)].needs_grad) return true;
  return false;
}

void Tape::accumulate(const Var& v, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(v.id_)];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) n.grad = g;
  else n.grad += g;
}

void Tape::backward(const Var& root) {
  if (!grad_enabled_) throw ContractViolation("backward on a tape with gradients disabled");
  Node& r = nodes_[static_cast<std::size_t>(root.id_)];
  if (r.value.rows() != 1 || r.value.cols() != 1) throw ContractViolation("backward root must be 1x1");
  if (!r.needs_grad) return;
  r.grad = Matrix::Ones(1, 1);
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.param) n.param->grad += n.grad;
    if (n.backward) n.backward(*this, n.grad);
    n.grad.resize(0, 0);
  }
}

namespace {

bool needs(const Var& a) { return a.tape()->needs_grad(a); }
bool needs(const Var& a, const Var& b) { return needs(a) || needs(b); }

void same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw ContractViolation("operands recorded on different tapes");
}

void same_shape(const Var& a, const Var& b, const char* op) {
  same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ContractViolation(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()));
}

}  // namespace

Var add(const Var& a, const Var& b) {
  same_shape(a, b, "add");
  Tape& t = *a.tape();
  return t.record(a.value() + b.value(), needs(a, b), [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  same_shape(a, b, "sub");
  Tape& t = *a.tape();
  return t.record(a.value() - b.value(), needs(a, b), [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  same_shape(a, b, "mul");
  Tape& t = *a.tape();
  return t.record(a.value().cwiseProduct(b.value()), needs(a, b), [a, b](Tape& tp, const Matrix& g) {
    if (tp.needs_grad(a)) tp.accumulate(a, g.cwiseProduct(b.value()));
    if (tp.needs_grad(b)) tp.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var matmul(const Var& a, const Var& b) {
  same_tape(a, b);
  if (a.cols() != b.rows())
    throw ContractViolation("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                            std::to_string(b.rows()));
  Tape& t = *a.tape();
  return t.record(a.value() * b.value(), needs(a, b), [a, b](Tape& tp, const Matrix& g) {
    if (tp.needs_grad(a)) tp.accumulate(a, g * b.value().transpose());
    if (tp.needs_grad(b)) tp.accumulate(b, a.value().transpose() * g);
  });
}

Var add_row(const Var& a, const Var& row) {
  same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw ContractViolation("add_row: expected 1 x cols row");
  Tape& t = *a.tape();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.record(std::move(out), needs(a, row), [a, row](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    if (tp.needs_grad(row)) tp.accumulate(row, g.colwise().sum());
  });
}

Var mul_row(const Var& a, const Var& row) {
  same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw ContractViolation("mul_row: expected 1 x cols row");
  Tape& t = *a.tape();
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  return t.record(std::move(out), needs(a, row), [a, row](Tape& tp, const Matrix& g) {
    if (tp.needs_grad(a)) {
      Matrix ga = g.array().rowwise() * row.value().row(0).array();
      tp.accumulate(a, ga);
    }
    if (tp.needs_grad(row)) tp.accumulate(row, g.cwiseProduct(a.value()).colwise().sum());
  });
}

Var scale(const Var& a, double c) {
  Tape& t = *a.tape();
  return t.record(a.value() * c, needs(a), [a, c](Tape& tp, const Matrix& g) { tp.accumulate(a, g * c); });
}

Var add_scalar(const Var& a, double c) {
  Tape& t = *a.tape();
  Matrix out = a.value().array() + c;
  return t.record(std::move(out), needs(a), [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g); });
}

Var mul_const(const Var& a, const Matrix& c) {
  if (c.rows() != a.rows() || c.cols() != a.cols()) throw ContractViolation("mul_const: shape mismatch");
  Tape& t = *a.tape();
  return t.record(a.value().cwiseProduct(c), needs(a),
                  [a, c](Tape& tp, const Matrix& g) { tp.accumulate(a, g.cwiseProduct(c)); });
}

Var add_const(const Var& a, const Matrix& c) {
  if (c.rows() != a.rows() || c.cols() != a.cols()) throw ContractViolation("add_const: shape mismatch");
  Tape& t = *a.tape();
  return t.record(a.value() + c, needs(a), [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g); });
}

Var relu(const Var& a) {
  Tape& t = *a.tape();
  Matrix out = a.value().cwiseMax(0.0);
  return t.record(std::move(out), needs(a), [a](Tape& tp, const Matrix& g) {
    Matrix ga = (a.value().array() > 0.0).select(g, 0.0);
    tp.accumulate(a, ga);
  });
}

Var leaky_relu(const Var& a, double slope) {
  Tape& t = *a.tape();
  Matrix out = (a.value().array() > 0.0).select(a.value(), a.value() * slope);
  return t.record(std::move(out), needs(a), [a, slope](Tape& tp, const Matrix& g) {
    Matrix ga = (a.value().array() > 0.0).select(g, g * slope);
    tp.accumulate(a, ga);
  });
}

Var sigmoid(const Var& a) {
  Tape& t = *a.tape();
  Matrix out = a.value().unaryExpr([](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  Matrix s = out;
  return t.record(std::move(out), needs(a), [a, s](Tape& tp, const Matrix& g) {
    Matrix ga = g.array() * s.array() * (1.0 - s.array());
    tp.accumulate(a, ga);
  });
}

Var tanh(const Var& a) {
  Tape& t = *a.tape();
  Matrix out = a.value().array().tanh();
  Matrix y = out;
  return t.record(std::move(out), needs(a), [a, y](Tape& tp, const Matrix& g) {
    Matrix ga = g.array() * (1.0 - y.array().square());
    tp.accumulate(a, ga);
  });
}

Var exp(const Var& a) {
  Tape& t = *a.tape();
  Matrix out = a.value().array().exp();
  Matrix y = out;
  return t.record(std::move(out), needs(a),
                  [a, y](Tape& tp, const Matrix& g) { tp.accumulate(a, g.cwiseProduct(y)); });
}

Var softplus(const Var& a) {
  Tape& t = *a.tape();
  Matrix out = a.value().unaryExpr([](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); });
  return t.record(std::move(out), needs(a), [a](Tape& tp, const Matrix& g) {
    Matrix s = a.value().unaryExpr([](double x) {
      return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    });
    tp.accumulate(a, g.cwiseProduct(s));
  });
}

Var square(const Var& a) {
  Tape& t = *a.tape();
  return t.record(a.value().array().square().matrix(), needs(a),
                  [a](Tape& tp, const Matrix& g) { tp.accumulate(a, 2.0 * g.cwiseProduct(a.value())); });
}

Var sqrt(const Var& a, double eps) {
  Tape& t = *a.tape();
  Matrix out = (a.value().array() + eps).sqrt();
  Matrix y = out;
  return t.record(std::move(out), needs(a), [a, y](Tape& tp, const Matrix& g) {
    Matrix ga = g.array() / (2.0 * y.array());
    tp.accumulate(a, ga);
  });
}

Var clamp(const Var& a, double lo, double hi) {
  Tape& t = *a.tape();
  Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
  return t.record(std::move(out), needs(a), [a, lo, hi](Tape& tp, const Matrix& g) {
    Matrix ga = ((a.value().array() >= lo) && (a.value().array() <= hi)).select(g, 0.0);
    tp.accumulate(a, ga);
  });
}

Var sum(const Var& a) {
  Tape& t = *a.tape();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const auto r = a.rows(), c = a.cols();
  return t.record(std::move(out), needs(a), [a, r, c](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix::Constant(r, c, g(0, 0)));
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ContractViolation("mean of empty matrix");
  return scale(sum(a), 1.0 / n);
}

Var mean_rows(const Var& a) {
  Tape& t = *a.tape();
  const auto r = a.rows();
  if (r == 0) throw ContractViolation("mean_rows of empty matrix");
  Matrix out = a.value().colwise().mean();
  return t.record(std::move(out), needs(a), [a, r](Tape& tp, const Matrix& g) {
    Matrix ga = g.replicate(r, 1) / static_cast<double>(r);
    tp.accumulate(a, ga);
  });
}

Var row_sum(const Var& a) {
  Tape& t = *a.tape();
  const auto c = a.cols();
  Matrix out = a.value().rowwise().sum();
  return t.record(std::move(out), needs(a), [a, c](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.replicate(1, c));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractViolation("concat_cols of nothing");
  Tape& t = *parts[0].tape();
  const auto r = parts[0].rows();
  Eigen::Index total = 0;
  bool any = false;
  for (const Var& p : parts) {
    if (p.rows() != r) throw ContractViolation("concat_cols: row mismatch");
    total += p.cols();
    any = any || t.needs_grad(p);
  }
  Matrix out(r, total);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return t.record(std::move(out), any, [keep](Tape& tp, const Matrix& g) {
    Eigen::Index off = 0;
    for (const Var& p : keep) {
      if (tp.needs_grad(p)) tp.accumulate(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractViolation("concat_rows of nothing");
  Tape& t = *parts[0].tape();
  const auto c = parts[0].cols();
  Eigen::Index total = 0;
  bool any = false;
  for (const Var& p : parts) {
    if (p.cols() != c) throw ContractViolation("concat_rows: column mismatch");
    total += p.rows();
    any = any || t.needs_grad(p);
  }
  Matrix out(total, c);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return t.record(std::move(out), any, [keep](Tape& tp, const Matrix& g) {
    Eigen::Index off = 0;
    for (const Var& p : keep) {
      if (tp.needs_grad(p)) tp.accumulate(p, g.middleRows(off, p.rows()));
      off += p.rows();
    }
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ContractViolation("slice_cols out of range");
  Tape& t = *a.tape();
  const auto r = a.rows(), c = a.cols();
  return t.record(a.value().middleCols(start, count), needs(a), [a, start, count, r, c](Tape& tp, const Matrix& g) {
    Matrix ga = Matrix::Zero(r, c);
    ga.middleCols(start, count) = g;
    tp.accumulate(a, ga);
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ContractViolation("slice_rows out of range");
  Tape& t = *a.tape();
  const auto r = a.rows(), c = a.cols();
  return t.record(a.value().middleRows(start, count), needs(a), [a, start, count, r, c](Tape& tp, const Matrix& g) {
    Matrix ga = Matrix::Zero(r, c);
    ga.middleRows(start, count) = g;
    tp.accumulate(a, ga);
  });
}

Var gather_rows(const Var& a, std::span<const int> rows) {
  Tape& t = *a.tape();
  const auto n = a.rows();
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= n) throw ContractViolation("gather_rows index out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return t.record(std::move(out), needs(a), [a, idx, n](Tape& tp, const Matrix& g) {
    Matrix ga = Matrix::Zero(n, g.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    tp.accumulate(a, ga);
  });
}

Var rowwise_dot(const Var& a, const Var& b) {
  same_shape(a, b, "rowwise_dot");
  Tape& t = *a.tape();
  Matrix out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return t.record(std::move(out), needs(a, b), [a, b](Tape& tp, const Matrix& g) {
    if (tp.needs_grad(a)) {
      Matrix ga = b.value().array().colwise() * g.col(0).array();
      tp.accumulate(a, ga);
    }
    if (tp.needs_grad(b)) {
      Matrix gb = a.value().array().colwise() * g.col(0).array();
      tp.accumulate(b, gb);
    }
  });
}

Var add_all(std::span<const Var> scalars) {
  if (scalars.empty()) throw ContractViolation("add_all of nothing");
  Tape& t = *scalars[0].tape();
  Matrix out = Matrix::Zero(1, 1);
  bool any = false;
  for (const Var& s : scalars) {
    if (s.rows() != 1 || s.cols() != 1) throw ContractViolation("add_all expects 1x1 vars");
    out(0, 0) += s.scalar();
    any = any || t.needs_grad(s);
  }
  std::vector<Var> keep(scalars.begin(), scalars.end());
  return t.record(std::move(out), any, [keep](Tape& tp, const Matrix& g) {
    for (const Var& s : keep) tp.accumulate(s, g);
  });
}

Var bce_with_logits(const Var& logits, const Matrix& targets) {
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols())
    throw ContractViolation("bce_with_logits: shape mismatch");
  const double n = static_cast<double>(targets.size());
  if (n == 0) throw ContractViolation("bce_with_logits of empty input");
  Tape& t = *logits.tape();
  const Matrix& x = logits.value();
  // softplus(x) - y * x, written stably.
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x.data()[i];
    const double sp = xi > 0 ? xi + std::log1p(std::exp(-xi)) : std::log1p(std::exp(xi));
    total += sp - targets.data()[i] * xi;
  }
  Matrix out(1, 1);
  out(0, 0) = total / n;
  return t.record(std::move(out), needs(logits), [logits, targets, n](Tape& tp, const Matrix& g) {
    Matrix s = logits.value().unaryExpr([](double v) {
      return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    });
    tp.accumulate(logits, (s - targets) * (g(0, 0) / n));
  });
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  const auto r = logits.rows(), c = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != r) throw ContractViolation("cross_entropy: label count mismatch");
  if (r == 0) throw ContractViolation("cross_entropy of empty input");
  Tape& t = *logits.tape();
  Matrix probs(r, c);
  double total = 0.0;
  for (Eigen::Index i = 0; i < r; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= c) throw ContractViolation("cross_entropy: label out of range");
    const double mx = logits.value().row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.value().row(i).array() - mx).exp();
    const double z = e.sum();
    probs.row(i) = e / z;
    total += -(logits.value()(i, y) - mx - std::log(z));
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(r);
  std::vector<int> lab(labels.begin(), labels.end());
  return t.record(std::move(out), needs(logits), [logits, probs, lab, r](Tape& tp, const Matrix& g) {
    Matrix ga = probs;
    for (Eigen::Index i = 0; i < r; ++i) ga(i, lab[static_cast<std::size_t>(i)]) -= 1.0;
    tp.accumulate(logits, ga * (g(0, 0) / static_cast<double>(r)));
  });
}

}  // namespace evogood::ad
