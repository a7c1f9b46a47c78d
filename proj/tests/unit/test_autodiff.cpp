#include <vector>

#include "doctest.h"
#include "evogood/autodiff.hpp"
#include "testing.hpp"

using namespace evogood;
using evogood::testing::finite_difference;

namespace {

struct Fixture {
  std::mt19937_64 rng{17};
  ad::Parameter a{"a", testing::random_matrix(rng, 4, 3)};
  ad::Parameter b{"b", testing::random_matrix(rng, 4, 3)};
  ad::Parameter c{"c", testing::random_matrix(rng, 3, 2)};
  ad::Parameter r{"r", testing::random_matrix(rng, 1, 3)};
  std::vector<ad::Parameter*> all() { return {&a, &b, &c, &r}; }
};

void check_op(const char* name, const std::function<ad::Var(ad::Tape&, Fixture&)>& f) {
  Fixture fx;
  auto res = finite_difference(fx.all(), [&](ad::Tape& t) { return f(t, fx); });
  INFO(name << " " << res.where);
  CHECK(res.max_rel < 1e-6);
}

}  // namespace

TEST_CASE("every differentiable op matches central differences") {
  using namespace ad;
  check_op("add/sub/mul", [](Tape& t, Fixture& f) {
    Var a = t.param(f.a), b = t.param(f.b);
    return sum(mul(add(a, b), sub(a, b)));
  });
  check_op("matmul", [](Tape& t, Fixture& f) { return sum(square(matmul(t.param(f.a), t.param(f.c)))); });
  check_op("row broadcast", [](Tape& t, Fixture& f) {
    Var a = t.param(f.a), r = t.param(f.r);
    return sum(square(mul_row(add_row(a, r), r)));
  });
  check_op("scale/consts", [](Tape& t, Fixture& f) {
    Var a = t.param(f.a);
    Matrix k = Matrix::Constant(4, 3, 0.7);
    return mean(add_const(mul_const(add_scalar(scale(a, -2.0), 0.5), k), k));
  });
  check_op("activations", [](Tape& t, Fixture& f) {
    Var a = t.param(f.a);
    Var parts[] = {sum(tanh(a)), sum(sigmoid(a)), sum(softplus(a)), mean(exp(scale(a, 0.3))),
                   sum(sqrt(square(a), 1e-3)), sum(leaky_relu(a, 0.2))};
    return add_all(parts);
  });
  check_op("reductions", [](Tape& t, Fixture& f) {
    Var a = t.param(f.a), b = t.param(f.b);
    return add(sum(square(mean_rows(a))), sum(square(row_sum(mul(a, b)))));
  });
  check_op("slicing", [](Tape& t, Fixture& f) {
    Var a = t.param(f.a), b = t.param(f.b);
    Var cols[] = {slice_cols(a, 1, 2), slice_cols(b, 0, 1)};
    Var rows[] = {slice_rows(a, 2, 2), b};
    std::vector<int> pick{3, 0, 3};
    return add_all(std::vector<Var>{sum(square(concat_cols(cols))), sum(square(concat_rows(rows))),
                                    sum(square(gather_rows(a, pick)))});
  });
  check_op("rowwise dot", [](Tape& t, Fixture& f) {
    return sum(square(rowwise_dot(t.param(f.a), t.param(f.b))));
  });
  check_op("bce", [](Tape& t, Fixture& f) {
    Matrix y(4, 1);
    y << 1, 0, 1, 0.25;
    return bce_with_logits(rowwise_dot(t.param(f.a), t.param(f.b)), y);
  });
  check_op("cross entropy", [](Tape& t, Fixture& f) {
    std::vector<int> labels{0, 1, 1, 0};
    return cross_entropy(matmul(t.param(f.b), t.param(f.c)) * 3.0, labels);
  });
  check_op("clamp interior", [](Tape& t, Fixture& f) { return sum(square(clamp(t.param(f.a), -10, 10))); });
}

TEST_CASE("clamp blocks the gradient outside its range") {
  ad::Parameter p("p", Matrix::Constant(1, 2, 5.0));
  p.value(0, 1) = 0.5;
  ad::Tape t;
  t.backward(ad::sum(ad::clamp(t.param(p), -1, 1)));
  CHECK(p.grad(0, 0) == 0.0);
  CHECK(p.grad(0, 1) == 1.0);
}

TEST_CASE("gradients accumulate over repeated use and backward is reusable") {
  ad::Parameter p("p", Matrix::Constant(2, 2, 3.0));
  ad::Tape t;
  ad::Var x = t.param(p);
  t.backward(ad::sum(ad::add(x, ad::scale(x, 2.0))));
  CHECK(p.grad.isApprox(Matrix::Constant(2, 2, 3.0)));
}

TEST_CASE("value-only tapes record no gradients") {
  ad::Parameter p("p", Matrix::Constant(2, 2, 1.0));
  ad::Tape t(false);
  ad::Var y = ad::sum(ad::square(t.param(p)));
  CHECK(y.scalar() == 4.0);
  CHECK_FALSE(t.needs_grad(y));
}

TEST_CASE("large logits stay finite in the losses") {
  ad::Tape t;
  ad::Var z = t.constant(Matrix::Constant(2, 3, 800.0));
  std::vector<int> lab{0, 1};
  CHECK(std::isfinite(ad::cross_entropy(z, lab).scalar()));
  Matrix y = Matrix::Zero(2, 3);
  CHECK(std::isfinite(ad::bce_with_logits(z, y).scalar()));
  CHECK(std::isfinite(ad::softplus(z).value().sum()));
}
