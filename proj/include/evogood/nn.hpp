#pragma once

// Small differentiable building blocks shared by the ESVAE and the predictors.

#include <random>
#include <string>
#include <vector>

#include "evogood/autodiff.hpp"

namespace evogood::nn {

using ad::Matrix;

enum class Init { glorot, zeros };

struct Linear {
  ad::Parameter w;  // in x out
  ad::Parameter b;  // 1 x out

  Linear() = default;
  Linear(const std::string& name, int in, int out, std::mt19937_64& rng, Init init = Init::glorot);

  int in() const { return static_cast<int>(w.value.rows()); }
  int out() const { return static_cast<int>(w.value.cols()); }
  ad::Var operator()(ad::Tape& tape, const ad::Var& x);
  Matrix apply(const Matrix& x) const;
  void collect(std::vector<ad::Parameter*>& out);
};

/// Single-layer LSTM cell; gate order i, f, g, o in the packed weights.
struct LstmCell {
  ad::Parameter w;  // in x 4k
  ad::Parameter u;  // k x 4k
  ad::Parameter b;  // 1 x 4k, forget-gate slice initialised to 1

  struct State {
    ad::Var h;
    ad::Var c;
  };
  struct Value {
    Matrix h;
    Matrix c;
  };

  LstmCell() = default;
  LstmCell(const std::string& name, int in, int hidden, std::mt19937_64& rng);

  int hidden() const { return static_cast<int>(u.value.rows()); }
  State step(ad::Tape& tape, const ad::Var& x, const State& s);
  /// Same step on plain values; rows of x are independent batch entries.
  Value step(const Matrix& x, const Value& s) const;
  void collect(std::vector<ad::Parameter*>& out);
};

/// Diagonal Gaussian as (mean, log-variance) row vectors on a tape.
struct GaussianVar {
  ad::Var mean;
  ad::Var logvar;
};

/// KL(q || p) for diagonal Gaussians, summed over dimensions (1 x 1).
ad::Var kl_diag(const GaussianVar& q, const GaussianVar& p);
/// KL(q || N(0, I)).
ad::Var kl_standard(const GaussianVar& q);
double kl_diag(const Matrix& mu_q, const Matrix& lv_q, const Matrix& mu_p, const Matrix& lv_p);

}  // namespace evogood::nn
