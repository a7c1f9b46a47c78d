#include "doctest.h"
#include "evogood/encoder.hpp"
#include "evogood/kernels.hpp"
#include "testing.hpp"

using namespace evogood;
namespace kn = evogood::kernels;

TEST_CASE("serial and parallel attention agree") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + trial, d = 5, heads = 1 + trial % 4;
    auto g = testing::random_graph(rng, n, 1, d, 0.3);
    GraphTopology topo(g);
    const kn::Csr& csr = topo.csr(1);
    Matrix z = testing::random_matrix(rng, n, d);
    Matrix as = testing::random_matrix(rng, heads, d), adst = testing::random_matrix(rng, heads, d);
    kn::AttentionCache c1, c2;
    Matrix o1 = kn::serial::attention_forward(csr, z, as, adst, 0.2, c1);
    Matrix o2 = kn::parallel::attention_forward(csr, z, as, adst, 0.2, c2);
    CHECK((o1 - o2).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((c1.alpha - c2.alpha).cwiseAbs().maxCoeff() < 1e-12);
    kn::AttentionCache c3;
    CHECK(kn::parallel::attention_forward(csr, z, as, adst, 0.2, c3) == o2);
    Matrix go = testing::random_matrix(rng, n, d);
    auto g1 = kn::serial::attention_backward(csr, z, as, adst, 0.2, c1, go);
    auto g2 = kn::parallel::attention_backward(csr, topo.reverse(1), z, as, adst, 0.2, c2, go);
    CHECK((g1.dz - g2.dz).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((g1.da_src - g2.da_src).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((g1.da_dst - g2.da_dst).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("attention weights are a softmax over each neighbourhood") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 15, d = 4;
    auto g = testing::random_graph(rng, n, 1, d, 0.35);
    Matrix z = testing::random_matrix(rng, n, d, 3.0);
    Matrix as = testing::random_matrix(rng, 4, d), adst = testing::random_matrix(rng, 4, d);
    auto w = attention_weights(z, g.at(1), as, adst, 0.2);
    const auto& off = g.at(1).offsets();
    for (int v = 0; v < n; ++v) {
      if (off[v + 1] == off[v]) continue;
      double s = 0;
      for (int e = off[v]; e < off[v + 1]; ++e) {
        CHECK(w[e] >= 0.0);
        s += w[e];
      }
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("attention backward matches central differences") {
  std::mt19937_64 rng(23);
  auto g = testing::random_graph(rng, 6, 1, 3, 0.5);
  GraphTopology topo(g);
  ad::Parameter z("z", testing::random_matrix(rng, 6, 3)), as("a_src", testing::random_matrix(rng, 2, 3)),
      adst("a_dst", testing::random_matrix(rng, 2, 3));
  Matrix w = testing::random_matrix(rng, 6, 3);
  for (KernelBackend b : {KernelBackend::serial, KernelBackend::parallel}) {
    auto res = testing::finite_difference({&z, &as, &adst}, [&](ad::Tape& t) {
      ad::Var out = attention(t, t.param(z), topo.csr(1), topo.reverse(1), t.param(as), t.param(adst), 0.2, b);
      return ad::sum(ad::mul_const(out, w));
    });
    INFO(res.where);
    CHECK(res.max_rel < 1e-3);
  }
}

TEST_CASE("pairwise cosine matches the definition") {
  std::mt19937_64 rng(24);
  Matrix x = testing::random_matrix(rng, 9, 4);
  x.row(3).setZero();
  Matrix s = kn::serial::pairwise_cosine(x), p = kn::parallel::pairwise_cosine(x);
  CHECK((s - p).cwiseAbs().maxCoeff() < 1e-12);
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j) {
      const double ni = x.row(i).norm(), nj = x.row(j).norm();
      const double expect = ni == 0 || nj == 0 ? 0.0 : x.row(i).dot(x.row(j)) / (ni * nj);
      CHECK(s(i, j) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("nearest-centroid assignment agrees across backends") {
  std::mt19937_64 rng(25);
  Matrix pts = testing::random_matrix(rng, 40, 3), cen = testing::random_matrix(rng, 5, 3);
  std::vector<int> a1(40), a2(40);
  std::vector<double> d1(40), d2(40);
  kn::serial::assign_nearest(pts, cen, a1, d1);
  kn::parallel::assign_nearest(pts, cen, a2, d2);
  CHECK(a1 == a2);
  CHECK(d1 == d2);
  for (int i = 0; i < 40; ++i) {
    int best = 0;
    for (int k = 1; k < 5; ++k)
      if ((pts.row(i) - cen.row(k)).squaredNorm() < (pts.row(i) - cen.row(best)).squaredNorm()) best = k;
    CHECK(a1[i] == best);
  }
}
