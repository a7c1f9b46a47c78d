#include <cmath>
#include <sstream>

#include "doctest.h"
#include "evogood/errors.hpp"
#include "evogood/evaluation.hpp"
#include "evogood/predictor.hpp"
#include "testing.hpp"

using namespace evogood;

namespace {

double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

struct ScoreSet {
  std::vector<double> scores;
  std::vector<int> labels;
};

// Coarse scores so that ties are common.
ScoreSet random_scores(std::mt19937_64& rng, int n) {
  ScoreSet s;
  std::uniform_int_distribution<int> level(0, 6);
  for (int i = 0; i < n; ++i) {
    s.scores.push_back(0.25 * level(rng) - 0.5);
    s.labels.push_back(static_cast<int>(rng() % 2));
  }
  s.labels[0] = 1;
  s.labels[1] = 0;
  return s;
}

}  // namespace

TEST_CASE("auc equals the pairwise count exactly") {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = random_scores(rng, 2 + trial * 3);
    CHECK(auc(s.scores, s.labels) == brute_auc(s.scores, s.labels));
  }
}

TEST_CASE("auc is invariant to monotone transforms and flips with the labels") {
  std::mt19937_64 rng(72);
  for (int trial = 0; trial < 100; ++trial) {
    auto s = random_scores(rng, 5 + trial);
    std::vector<double> t;
    for (double x : s.scores) t.push_back(std::exp(3 * x) + 2);
    CHECK(auc(t, s.labels) == auc(s.scores, s.labels));
    std::vector<int> flipped;
    for (int l : s.labels) flipped.push_back(1 - l);
    CHECK(auc(s.scores, flipped) == doctest::Approx(1.0 - auc(s.scores, s.labels)).epsilon(1e-12));
  }
  std::vector<double> sc{0.1, 0.2};
  std::vector<int> one{1, 1};
  CHECK_THROWS_AS(auc(sc, one), UndefinedMetric);
}

TEST_CASE("accuracy counts matches") {
  std::vector<int> p{1, 2, 3, 1}, y{1, 2, 1, 1};
  CHECK(accuracy(p, y) == 0.75);
  CHECK_THROWS_AS(accuracy(std::vector<int>{}, std::vector<int>{}), UndefinedMetric);
}

TEST_CASE("report delta percent matches a hand computation") {
  std::mt19937_64 rng(73);
  std::uniform_real_distribution<double> u(0.3, 0.99);
  std::vector<EvalReport> rows;
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> in, ood;
    for (int s = 0; s < 5; ++s) {
      in.push_back(u(rng));
      ood.push_back(u(rng));
    }
    rows.push_back(report("m" + std::to_string(trial), "auc", {1, 2, 3, 4, 5}, in, ood));
  }
  rows.push_back(report("single", "auc", {1}, {0.5}));
  std::ostringstream csv;
  write_report_csv(csv, rows);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "name,metric,seeds,mean,std,ood_mean,ood_std,delta,delta_pct");
  for (const auto& r : rows) {
    std::getline(lines, line);
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    double mi = 0, mo = 0;
    for (double x : r.in_values) mi += x / r.in_values.size();
    CHECK(std::stod(f[3]) == doctest::Approx(mi).epsilon(1e-12));
    if (!r.paired()) continue;
    for (double x : r.ood_values) mo += x / r.ood_values.size();
    char hand[32];
    std::snprintf(hand, sizeof hand, "%.2f", 100.0 * (mi - mo) / mi);
    CHECK(f[8] == std::string(hand));
    double ss = 0;
    for (double x : r.in_values) ss += (x - mi) * (x - mi);
    CHECK(std::stod(f[4]) == doctest::Approx(std::sqrt(ss / 4)).epsilon(1e-10));
  }
  const std::string table = render_report_table(rows);
  CHECK(table.find("w/ OOD") != std::string::npos);
  CHECK(table.find("single") != std::string::npos);
}

TEST_CASE("spearman uses average ranks") {
  std::vector<double> x{1, 2, 3, 4}, y{10, 20, 30, 40}, z{4, 3, 2, 1};
  CHECK(spearman(x, y) == doctest::Approx(1.0));
  CHECK(spearman(x, z) == doctest::Approx(-1.0));
  std::vector<double> tx{1, 2, 2, 3}, ty{1, 3, 2, 4};
  // ranks (1, 2.5, 2.5, 4) and (1, 3, 2, 4): Pearson of the ranks.
  CHECK(spearman(tx, ty) == doctest::Approx(4.5 / std::sqrt(4.5 * 5.0)));
  CHECK(sample_std(std::vector<double>{3.0}) == 0.0);
}

TEST_CASE("filter rules withhold tagged edges from the training view") {
  std::mt19937_64 rng(74);
  auto g = testing::random_graph(rng, 8, 2, 1, 0.5, LabelKind::link_occurrence);
  Provenance prov;
  for (int t = 1; t <= 3; ++t)
    for (const Edge& e : g.edges_at(t)) prov.edges.push_back({t, e.u, e.v, (e.u + e.v) % 2 ? "odd" : "even"});
  std::sort(prov.edges.begin(), prov.edges.end());
  auto rule = FilterRule::parse("odd");
  auto views = ood_split_links(g, prov, rule);
  CHECK(views.test == g);
  std::size_t odd = 0;
  for (const auto& e : prov.edges) odd += e.tag == "odd";
  CHECK(views.removed == odd);
  for (int t = 1; t <= 3; ++t)
    for (const Edge& e : views.train.edges_at(t)) CHECK((e.u + e.v) % 2 == 0);
  CHECK_THROWS_AS(ood_split_links(g, prov, FilterRule::parse("odd,even")), ConfigError);
  CHECK_FALSE(ood_split_links(g, prov, FilterRule::parse("K9")).warnings.empty());
  CHECK(FilterRule::parse("a, b").tags == std::vector<std::string>{"a", "b"});
  CHECK(FilterRule::parse("").empty());
}

TEST_CASE("link predictor is symmetric and differentiable") {
  std::mt19937_64 rng(75);
  auto lp = LinkPredictor::init(4, rng);
  Matrix h = testing::random_matrix(rng, 6, 4);
  std::vector<int> us{0, 1, 2, 5}, vs{3, 4, 5, 2};
  auto a = lp.logits(h, us, vs), b = lp.logits(h, vs, us);
  CHECK((a - b).norm() < 1e-12);
  ad::Parameter hp("h", h);
  std::vector<ad::Parameter*> ps;
  lp.collect(ps);
  ps.push_back(&hp);
  Matrix y(4, 1);
  y << 1, 0, 1, 0;
  auto res = testing::finite_difference(ps, [&](ad::Tape& t) {
    return ad::bce_with_logits(lp.logits(t, t.param(hp), us, vs), y);
  });
  CHECK(res.max_rel < 1e-3);
  ad::Tape t(false);
  CHECK((lp.logits(t, t.constant(h), us, vs).value() - a).norm() < 1e-12);

  auto np = NodePredictor::init(4, 3, rng);
  std::vector<int> nodes{1, 3};
  ad::Tape t2(false);
  CHECK((np.logits(t2, t2.constant(h), nodes).value() - np.logits(h, nodes)).norm() < 1e-12);
}

TEST_CASE("non-edge sampling avoids existing pairs and self-pairs") {
  std::mt19937_64 rng(76);
  for (int trial = 0; trial < 20; ++trial) {
    auto edges = testing::random_edges(rng, 12, 0.3);
    PairSet set(edges);
    auto neg = sample_non_edges(12, set, 15, rng);
    CHECK(neg.size() == 15);
    for (const Edge& e : neg) {
      CHECK(e.u != e.v);
      CHECK_FALSE(set.contains(e.u, e.v));
      CHECK_FALSE(set.contains(e.v, e.u));
    }
  }
}
