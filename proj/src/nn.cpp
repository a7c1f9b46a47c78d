#include "evogood/nn.hpp"

#include <cmath>

#include "evogood/encoder.hpp"

namespace evogood::nn {

Linear::Linear(const std::string& name, int in, int out, std::mt19937_64& rng, Init init)
    : w(name + ".w", init == Init::zeros ? Matrix(Matrix::Zero(in, out)) : glorot_uniform(in, out, rng)),
      b(name + ".b", Matrix::Zero(1, out)) {}

ad::Var Linear::operator()(ad::Tape& tape, const ad::Var& x) {
  return ad::add_row(ad::matmul(x, tape.param(w)), tape.param(b));
}

Matrix Linear::apply(const Matrix& x) const {
  Matrix y = x * w.value;
  y.rowwise() += b.value.row(0);
  return y;
}

void Linear::collect(std::vector<ad::Parameter*>& out) {
  out.push_back(&w);
  out.push_back(&b);
}

LstmCell::LstmCell(const std::string& name, int in, int hidden, std::mt19937_64& rng)
    : w(name + ".w", glorot_uniform(in, 4 * hidden, rng)),
      u(name + ".u", glorot_uniform(hidden, 4 * hidden, rng)),
      b(name + ".b", Matrix::Zero(1, 4 * hidden)) {
  b.value.block(0, hidden, 1, hidden).setOnes();
}

LstmCell::State LstmCell::step(ad::Tape& tape, const ad::Var& x, const State& s) {
  const int k = hidden();
  ad::Var pre = ad::add_row(ad::add(ad::matmul(x, tape.param(w)), ad::matmul(s.h, tape.param(u))), tape.param(b));
  ad::Var i = ad::sigmoid(ad::slice_cols(pre, 0, k));
  ad::Var f = ad::sigmoid(ad::slice_cols(pre, k, k));
  ad::Var g = ad::tanh(ad::slice_cols(pre, 2 * k, k));
  ad::Var o = ad::sigmoid(ad::slice_cols(pre, 3 * k, k));
  ad::Var c = ad::add(ad::mul(f, s.c), ad::mul(i, g));
  return {ad::mul(o, ad::tanh(c)), c};
}

LstmCell::Value LstmCell::step(const Matrix& x, const Value& s) const {
  const int k = hidden();
  Matrix pre = x * w.value + s.h * u.value;
  pre.rowwise() += b.value.row(0);
  auto sig = [](const Matrix& m) { return Matrix((1.0 + (-m.array()).exp()).inverse().matrix()); };
  Matrix i = sig(pre.middleCols(0, k));
  Matrix f = sig(pre.middleCols(k, k));
  Matrix g = pre.middleCols(2 * k, k).array().tanh().matrix();
  Matrix o = sig(pre.middleCols(3 * k, k));
  Matrix c = f.cwiseProduct(s.c) + i.cwiseProduct(g);
  Matrix h = o.cwiseProduct(Matrix(c.array().tanh().matrix()));
  return {std::move(h), std::move(c)};
}

void LstmCell::collect(std::vector<ad::Parameter*>& out) {
  out.push_back(&w);
  out.push_back(&u);
  out.push_back(&b);
}

ad::Var kl_diag(const GaussianVar& q, const GaussianVar& p) {
  // 0.5 * sum(lv_p - lv_q + (exp(lv_q) + (mu_q - mu_p)^2) / exp(lv_p) - 1)
  ad::Var inv_var_p = ad::exp(ad::scale(p.logvar, -1.0));
  ad::Var num = ad::add(ad::exp(q.logvar), ad::square(ad::sub(q.mean, p.mean)));
  ad::Var terms = ad::add_scalar(ad::add(ad::sub(p.logvar, q.logvar), ad::mul(num, inv_var_p)), -1.0);
  return ad::scale(ad::sum(terms), 0.5);
}

ad::Var kl_standard(const GaussianVar& q) {
  ad::Var terms = ad::add_scalar(ad::sub(ad::add(ad::exp(q.logvar), ad::square(q.mean)), q.logvar), -1.0);
  return ad::scale(ad::sum(terms), 0.5);
}

double kl_diag(const Matrix& mu_q, const Matrix& lv_q, const Matrix& mu_p, const Matrix& lv_p) {
  const auto terms = lv_p.array() - lv_q.array() +
                     (lv_q.array().exp() + (mu_q - mu_p).array().square()) / lv_p.array().exp() - 1.0;
  return 0.5 * terms.sum();
}

}  // namespace evogood::nn
