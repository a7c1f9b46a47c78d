#include <cmath>

#include "doctest.h"
#include "evogood/encoder.hpp"
#include "evogood/errors.hpp"
#include "testing.hpp"

using namespace evogood;

namespace {

EncoderConfig small_config(int d, std::uint64_t seed, Activation act = Activation::relu) {
  EncoderConfig cfg;
  cfg.input_dim = d;
  cfg.hidden_dim = 6;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.activation = act;
  cfg.seed = seed;
  return cfg;
}

EncoderParams params_for(const EncoderConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  return EncoderParams::init(cfg, rng);
}

}  // namespace

TEST_CASE("relative time encoding follows the sinusoid table") {
  RowVector r = relative_time_encoding(3, 6);
  for (int j = 0; j < 6; ++j) {
    const double angle = 3.0 / std::pow(10000.0, 2.0 * (j / 2) / 6.0);
    CHECK(r(j) == doctest::Approx(j % 2 == 0 ? std::sin(angle) : std::cos(angle)).epsilon(1e-15));
  }
  CHECK(relative_time_encoding(1, 5).size() == 5);
}

TEST_CASE("projection adds the time encoding before the shared weights") {
  std::mt19937_64 rng(31);
  auto cfg = small_config(4, 2, Activation::identity);
  auto p = params_for(cfg);
  Matrix x = testing::random_matrix(rng, 3, 4);
  Matrix out = project_features(x, 2, cfg, p);
  for (int v = 0; v < 3; ++v) {
    RowVector expect = (x.row(v) + relative_time_encoding(2, 4)) * p.w1.value + p.b.value;
    CHECK((out.row(v) - expect).norm() < 1e-12);
  }
}

TEST_CASE("temporal aggregation is a causal running mean") {
  std::mt19937_64 rng(32);
  std::vector<Matrix> z;
  for (int t = 0; t < 4; ++t) z.push_back(testing::random_matrix(rng, 3, 2));
  auto h = temporal_aggregate(z);
  for (int t = 1; t <= 4; ++t) {
    Matrix m = Matrix::Zero(3, 2);
    for (int k = 0; k < t; ++k) m += z[k];
    CHECK((h.at(t) - m / t).norm() < 1e-12);
  }
}

TEST_CASE("glorot init respects its limit") {
  std::mt19937_64 rng(33);
  Matrix w = glorot_uniform(30, 20, rng);
  CHECK(w.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 50.0));
  CHECK(std::abs(w.mean()) < 0.05);
}

TEST_CASE("encoder is causal over snapshots") {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3 + trial % 8, T = 2 + trial % 4, d = 3;
    auto g = testing::random_graph(rng, n, T, d, 0.4);
    auto cfg = small_config(d, 100 + trial);
    auto p = params_for(cfg);
    auto full = encode(g, cfg, p);
    const int t = 1 + trial % T;
    auto pre = encode(g.prefix(t), cfg, p);
    for (int k = 1; k <= t; ++k) CHECK(pre.at(k) == full.at(k));
  }
}

TEST_CASE("encoder is permutation equivariant") {
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3 + trial % 10, T = 1 + trial % 3, d = 4;
    auto g = testing::random_graph(rng, n, T, d, 0.4);
    auto perm = testing::random_permutation(rng, n);
    auto cfg = small_config(d, 200 + trial, trial % 2 ? Activation::relu : Activation::tanh);
    auto p = params_for(cfg);
    auto h = encode(g, cfg, p);
    auto hp = encode(permute_nodes(g, perm), cfg, p);
    double worst = 0;
    for (int t = 1; t <= T; ++t)
      for (int v = 0; v < n; ++v) worst = std::max(worst, (hp.at(t).row(perm[v]) - h.at(t).row(v)).cwiseAbs().maxCoeff());
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("serial and parallel backends encode alike") {
  std::mt19937_64 rng(36);
  auto g = testing::random_graph(rng, 12, 3, 4, 0.3);
  auto cfg = small_config(4, 9);
  auto p = params_for(cfg);
  auto a = encode(g, cfg, p);
  cfg.backend = KernelBackend::serial;
  auto b = encode(g, cfg, p);
  for (int t = 1; t <= 3; ++t) CHECK((a.at(t) - b.at(t)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(a.produced_by == b.produced_by);
}

TEST_CASE("encoder gradients match central differences") {
  std::mt19937_64 rng(37);
  auto g = testing::random_graph(rng, 5, 3, 3, 0.5);
  GraphTopology topo(g);
  for (Activation act : {Activation::tanh, Activation::identity}) {
    auto cfg = small_config(3, 5, act);
    auto p = params_for(cfg);
    std::vector<Matrix> w;
    for (int t = 0; t < 3; ++t) w.push_back(testing::random_matrix(rng, 5, cfg.hidden_dim));
    auto res = testing::finite_difference(p.all(), [&](ad::Tape& tape) {
      auto h = encode(tape, g, topo, cfg, p);
      std::vector<ad::Var> parts;
      for (int t = 0; t < 3; ++t) parts.push_back(ad::sum(ad::mul_const(h[t], w[t])));
      return ad::add_all(parts);
    });
    INFO(res.where);
    CHECK(res.checked > 50);
    CHECK(res.max_rel < 1e-3);
  }
}

TEST_CASE("encoder rejects mismatched inputs") {
  std::mt19937_64 rng(38);
  auto g = testing::random_graph(rng, 4, 2, 3, 0.5);
  auto cfg = small_config(5, 1);
  auto p = params_for(cfg);
  CHECK_THROWS_AS(encode(g, cfg, p), ConfigError);
  cfg.heads = 0;
  CHECK_THROWS_AS(cfg.check(), ConfigError);
}
