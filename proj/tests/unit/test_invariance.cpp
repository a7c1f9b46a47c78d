#include <algorithm>
#include <sstream>

#include "doctest.h"
#include "evogood/errors.hpp"
#include "evogood/intervention.hpp"
#include "evogood/invariance.hpp"
#include "testing.hpp"

using namespace evogood;

namespace {

RowVector random_row(std::mt19937_64& rng, int d, double scale = 2.0) {
  return testing::random_matrix(rng, 1, d, scale);
}

NodeRepresentationSequence random_h(std::mt19937_64& rng, int n, int T, int d) {
  NodeRepresentationSequence h;
  for (int t = 0; t < T; ++t) h.values.push_back(testing::random_matrix(rng, n, d));
  return h;
}

// A mean-squared readout, so that any change to h changes the loss.
double readout(const std::vector<Matrix>& h, const std::vector<Matrix>& w) {
  double s = 0;
  for (std::size_t t = 0; t < h.size(); ++t) s += (h[t].cwiseProduct(w[t])).sum();
  return s * s;
}

}  // namespace

TEST_CASE("mask complement, additive split and partition hold") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 1 + trial % 12, t = 1 + trial % 6;
    Matrix hist = testing::random_matrix(rng, t, d, 0.3 + 0.1 * (trial % 5));
    const double delta = 0.05 * (trial % 7);
    RowVector w = random_row(rng, d, 3.0);
    MaskPair m = masks(hist, delta, w);
    for (int j = 0; j < d; ++j) {
      CHECK(m.m_i(j) + m.m_v(j) == 1.0);
      CHECK(m.m_i(j) >= 0.0);
      CHECK(m.m_i(j) <= 1.0);
    }
    RowVector h = random_row(rng, d);
    auto [hi, hv] = split(h, m);
    CHECK((hi + hv - h).cwiseAbs().maxCoeff() <= 1e-7);

    const double cutoff = 0.1 + 0.8 * (trial % 9) / 8.0;
    auto idx = pattern_indices(m, cutoff);
    std::vector<int> all = idx.invariant;
    all.insert(all.end(), idx.variant.begin(), idx.variant.end());
    std::sort(all.begin(), all.end());
    CHECK(all.size() == static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) CHECK(all[j] == j);
    for (int j : idx.invariant) CHECK(m.m_i(j) > cutoff);
    for (int j : idx.variant) CHECK(m.m_i(j) <= cutoff);
  }
}

TEST_CASE("gate marks low-variance dimensions and is monotone in delta") {
  std::mt19937_64 rng(62);
  Matrix hist(4, 2);
  hist << 1, 0, 1, 5, 1, -5, 1, 0;
  RowVector gate = init_invariant_gate(hist, 0.1);
  CHECK(gate(0) == 1.0);
  CHECK(gate(1) == 0.0);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix h = testing::random_matrix(rng, 1 + trial % 7, 6);
    const double lo = 0.3 * (trial % 5), hi = lo + 0.2 * (1 + trial % 3);
    RowVector a = init_invariant_gate(h, lo), b = init_invariant_gate(h, hi);
    for (int j = 0; j < 6; ++j)
      if (a(j) == 1.0) CHECK(b(j) == 1.0);
  }
}

TEST_CASE("per-node gates follow the configured history") {
  std::mt19937_64 rng(63);
  auto h = random_h(rng, 5, 4, 6);
  InvarianceConfig cfg;
  cfg.layer_norm = false;
  cfg.delta = 0.8;
  auto shared = compute_gates(h, cfg);
  REQUIRE(shared.size() == 4);
  for (int v = 0; v < 5; ++v) {
    Matrix hist(4, 6);
    for (int t = 0; t < 4; ++t) hist.row(t) = h.values[t].row(v);
    CHECK(shared[3].row(v) == init_invariant_gate(hist, 0.8));
    CHECK(shared[0] == shared[3]);
  }
  cfg.per_timestamp = true;
  auto per = compute_gates(h, cfg);
  for (int v = 0; v < 5; ++v) {
    Matrix hist(2, 6);
    for (int t = 0; t < 2; ++t) hist.row(t) = h.values[t].row(v);
    CHECK(per[1].row(v) == init_invariant_gate(hist, 0.8));
  }
  Matrix ln = layer_normalize(h.values[0]);
  for (int v = 0; v < 5; ++v) {
    CHECK(std::abs(ln.row(v).mean()) < 1e-12);
    CHECK(ln.row(v).squaredNorm() / 6 == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("gradient reaches W_I but not the gate") {
  std::mt19937_64 rng(64);
  ad::Parameter w("w_i", testing::random_matrix(rng, 1, 5));
  ad::Parameter h("h", testing::random_matrix(rng, 4, 5));
  Matrix gate = (testing::random_matrix(rng, 4, 5).array() > 0).cast<double>();
  Matrix weights = testing::random_matrix(rng, 4, 5);
  auto loss = [&](ad::Tape& t) {
    return ad::sum(ad::mul_const(invariant_part(t.param(h), invariant_mask(t.param(w), gate)), weights));
  };
  auto res = testing::finite_difference({&w}, loss);
  INFO(res.where);
  CHECK(res.max_rel < 1e-3);
  // Dimensions gated off for every node receive no gradient at all.
  for (int j = 0; j < 5; ++j)
    if (gate.col(j).sum() == 0) CHECK(w.grad(0, j) == 0.0);
}

TEST_CASE("intervene never touches invariant coordinates") {
  std::mt19937_64 rng(65);
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 1 + trial % 10;
    RowVector h = random_row(rng, d), s = random_row(rng, d);
    MaskPair m = masks_from_gate((random_row(rng, d).array() > 0).cast<double>().matrix(), random_row(rng, d));
    auto idx = pattern_indices(m, 0.5);
    RowVector out = intervene(h, idx.variant, s);
    for (int j : idx.invariant) CHECK(out(j) == h(j));
    for (int j : idx.variant) CHECK(out(j) == s(j));
  }
  CHECK_THROWS_AS(intervene(RowVector::Zero(3), {3}, RowVector::Zero(3)), ContractViolation);
}

TEST_CASE("risk is nonnegative and vanishes without variant dimensions") {
  std::mt19937_64 rng(66);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 6, T = 1 + trial % 3, d = 1 + trial % 5;
    auto h = random_h(rng, n, T, d);
    auto lib = build_observed_library(h);
    if (trial % 2) {
      std::vector<TaggedVector> gen;
      for (int i = 0; i < 3; ++i) gen.push_back({random_row(rng, d), 1 + i % T});
      lib.set_generated(gen);
    }
    InterventionConfig cfg;
    cfg.rounds = 2 + trial % 4;
    cfg.ratio = trial % 3 ? 1.0 : 0.5;
    cfg.match_timestamp = trial % 4 == 0;
    InterventionPlan plan;
    plan.rounds = cfg.rounds;
    for (int v = 0; v < n; ++v) plan.targets.push_back({v, T});
    auto draws = draw_interventions(lib, plan, cfg, rng);
    std::vector<Matrix> w;
    for (int t = 0; t < T; ++t) w.push_back(testing::random_matrix(rng, n, d));
    auto loss = [&](const std::vector<Matrix>& x) { return readout(x, w); };

    std::vector<Eigen::MatrixXi> variant(T, Eigen::MatrixXi::Zero(n, d));
    CHECK(risk_loss(loss, h, lib, draws, variant) == 0.0);

    for (auto& m : variant) m = (testing::random_matrix(rng, n, d).array() > 0).cast<int>();
    const double r = risk_loss(loss, h, lib, draws, variant);
    CHECK(r >= 0.0);
    CHECK(risk_loss(loss, h, lib, draws, variant) == r);
  }
}

TEST_CASE("tape risk agrees with the value form and with central differences") {
  std::mt19937_64 rng(67);
  const int n = 4, T = 2, d = 3;
  auto hv = random_h(rng, n, T, d);
  std::vector<ad::Parameter> hp;
  for (int t = 0; t < T; ++t) hp.emplace_back("h" + std::to_string(t), hv.values[t]);
  auto lib = build_observed_library(hv);
  InterventionConfig cfg;
  InterventionPlan plan;
  for (int v = 0; v < n; ++v) plan.targets.push_back({v, 2});
  auto draws = draw_interventions(lib, plan, cfg, rng);
  std::vector<Eigen::MatrixXi> variant(T, Eigen::MatrixXi::Ones(n, d));
  variant[1](0, 0) = 0;
  std::vector<Matrix> w;
  for (int t = 0; t < T; ++t) w.push_back(testing::random_matrix(rng, n, d));

  auto tape_loss = [&](const std::vector<ad::Var>& h) {
    std::vector<ad::Var> parts;
    for (int t = 0; t < T; ++t) parts.push_back(ad::sum(ad::mul_const(h[t], w[t])));
    return ad::square(ad::add_all(parts));
  };
  ad::Tape tape(false);
  std::vector<ad::Var> hc;
  for (auto& m : hv.values) hc.push_back(tape.constant(m));
  auto r = risk_loss(tape_loss, hc, lib, draws, variant);
  CHECK(r.risk.scalar() ==
        doctest::Approx(risk_loss([&](const std::vector<Matrix>& x) { return readout(x, w); }, hv, lib, draws, variant))
            .epsilon(1e-12));
  CHECK(r.round_losses.size() == 4);

  std::vector<ad::Parameter*> ps;
  for (auto& p : hp) ps.push_back(&p);
  auto res = testing::finite_difference(ps, [&](ad::Tape& t) {
    std::vector<ad::Var> h;
    for (auto& p : hp) h.push_back(t.param(p));
    return risk_loss(tape_loss, h, lib, draws, variant).risk;
  });
  INFO(res.where);
  CHECK(res.max_rel < 1e-3);
}

TEST_CASE("draws respect the library mix and timestamp matching") {
  std::mt19937_64 rng(68);
  auto h = random_h(rng, 6, 3, 2);
  auto lib = build_observed_library(h);
  std::vector<TaggedVector> gen;
  for (int i = 0; i < 9; ++i) gen.push_back({random_row(rng, 2), 1 + i % 3});
  lib.set_generated(gen);
  InterventionPlan plan;
  plan.rounds = 5;
  for (int v = 0; v < 6; ++v)
    for (int t = 1; t <= 3; ++t) plan.targets.push_back({v, t});

  InterventionConfig only_obs;
  only_obs.gen_fraction = 0.0;
  for (const auto& round : draw_interventions(lib, plan, only_obs, rng).rounds)
    for (int id : round.sources) CHECK(lib.at(id).source == SampleSource::observed);

  InterventionConfig only_gen;
  only_gen.gen_fraction = 1.0;
  only_gen.match_timestamp = true;
  for (const auto& round : draw_interventions(lib, plan, only_gen, rng).rounds)
    for (std::size_t i = 0; i < round.sources.size(); ++i) {
      CHECK(lib.at(round.sources[i]).source == SampleSource::generated);
      CHECK(lib.at(round.sources[i]).t == round.targets[i].t);
    }

  InterventionConfig half;
  half.ratio = 0.5;
  auto draws = draw_interventions(lib, plan, half, rng);
  for (const auto& round : draws.rounds) CHECK(round.targets.size() == 9);

  std::mt19937_64 a(5), b(5);
  auto d1 = draw_interventions(lib, plan, half, a), d2 = draw_interventions(lib, plan, half, b);
  for (std::size_t r = 0; r < d1.rounds.size(); ++r) CHECK(d1.rounds[r].sources == d2.rounds[r].sources);

  std::ostringstream trace;
  write_trace(trace, d1, lib, std::vector<double>{1, 2, 3, 4, 5});
  const std::string text = trace.str();
  CHECK(text.rfind("round,node,t,source_id,source,loss\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 5 * 9);
}

TEST_CASE("population variance matches the definition") {
  std::vector<double> xs{1.0, 2.0, 4.0, 7.0};
  CHECK(population_variance(xs) == doctest::Approx(5.25));
  std::vector<double> same(5, 0.1 + 0.2);
  CHECK(population_variance(same) == 0.0);
  InterventionConfig bad;
  bad.rounds = 1;
  CHECK_THROWS_AS(bad.check(), ConfigError);
}
