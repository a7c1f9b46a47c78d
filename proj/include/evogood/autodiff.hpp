#pragma once

// Reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records every operation applied to Vars; Tape::backward walks the
// record in reverse and accumulates gradients into the Parameters that were
// bound with Tape::param. A tape constructed with grad disabled records values
// only, which is what evaluation and finite-difference checks use.

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace evogood::ad {

using Matrix = Eigen::MatrixXd;

struct Parameter {
  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {
    grad = Matrix::Zero(value.rows(), value.cols());
  }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }

  std::string name;
  Matrix value;
  Matrix grad;
};

class Tape;

class Var {
 public:
  Var() = default;
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  Tape* tape() const noexcept { return tape_; }
  int id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var param(Parameter& p);
  Var record(Matrix value, bool needs_grad, Backward backward);

  bool grad_enabled() const noexcept { return grad_enabled_; }
  bool needs_grad(const Var& v) const { return nodes_[v.id_].needs_grad; }
  bool any_needs_grad(std::initializer_list<Var> vs) const;
  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  /// Adds g into v's gradient buffer; no-op for nodes that do not need grad.
  void accumulate(const Var& v, const Matrix& g);

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to parameters.
  void backward(const Var& root);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Backward backward;
    Parameter* param = nullptr;
  };
  std::deque<Node> nodes_;
  bool grad_enabled_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

// Elementwise and linear algebra.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // Hadamard product
Var matmul(const Var& a, const Var& b);
Var add_row(const Var& a, const Var& row);  // broadcast 1 x c over rows
Var mul_row(const Var& a, const Var& row);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var mul_const(const Var& a, const Matrix& c);
Var add_const(const Var& a, const Matrix& c);

// Activations.
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var softplus(const Var& a);
Var square(const Var& a);
Var sqrt(const Var& a, double eps = 0.0);
Var clamp(const Var& a, double lo, double hi);

// Reductions and reshaping.
Var sum(const Var& a);        // 1 x 1
Var mean(const Var& a);       // 1 x 1
Var mean_rows(const Var& a);  // r x c -> 1 x c
Var row_sum(const Var& a);    // r x c -> r x 1
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var gather_rows(const Var& a, std::span<const int> rows);
Var rowwise_dot(const Var& a, const Var& b);  // r x 1
Var add_all(std::span<const Var> scalars);    // sum of 1 x 1 vars

/// Mean binary cross-entropy with logits against constant targets in [0, 1].
Var bce_with_logits(const Var& logits, const Matrix& targets);
/// Mean categorical cross-entropy of row-wise softmax(logits); labels are 0-based.
Var cross_entropy(const Var& logits, std::span<const int> labels);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }
inline Var operator*(const Var& a, double c) { return scale(a, c); }

}  // namespace evogood::ad
