#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "evogood/errors.hpp"
#include "evogood/evaluation.hpp"
#include "evogood/kernels.hpp"
#include "evogood/synthetic.hpp"
#include "testing.hpp"

using namespace evogood;

namespace {

std::string dump(const SyntheticDataset& d) {
  std::ostringstream out;
  write_dataset(out, d.graph);
  write_provenance(out, d.provenance);
  d.split.write(out);
  return out.str();
}

void check_all_tagged(const SyntheticDataset& d) {
  const DynamicGraph& g = d.graph;
  const int last = g.num_timestamps() + (g.labels.links.empty() ? 0 : 1);
  std::size_t edges = 0;
  for (int t = 1; t <= last; ++t)
    for (const Edge& e : g.edges_at(t)) {
      ++edges;
      CHECK_FALSE(d.provenance.tag_of(t, e.u, e.v).empty());
    }
  CHECK(d.provenance.edges.size() == edges);
}

}  // namespace

TEST_CASE("generators are deterministic and tag every edge") {
  SbmSpec sbm;
  sbm.nodes = 90;
  sbm.timestamps = 4;
  EnvSuiteSpec env;
  env.nodes = 50;
  env.timestamps = 4;
  EnvSuiteSpec dyn = env;
  dyn.mode = EnvMode::nonstationary;
  dyn.gamma_dyn = 0.3;
  FeatureShiftSpec fs;
  fs.max_iterations = 30;
  fs.dim = 3;
  const auto a = gen_sbm_node_cls(sbm), b = gen_sbm_node_cls(sbm);
  CHECK(dump(a) == dump(b));
  check_all_tagged(a);
  CHECK(validate(a.graph).empty());
  for (const auto& spec : {env, dyn}) {
    const auto x = gen_env_suite(spec), y = gen_env_suite(spec);
    CHECK(dump(x) == dump(y));
    check_all_tagged(x);
    CHECK(validate(x.graph).empty());
  }
  const auto base = gen_env_suite(env);
  const auto f1 = gen_feature_shift(base.graph, fs), f2 = gen_feature_shift(base.graph, fs);
  CHECK(dump(f1) == dump(f2));
  check_all_tagged(f1);
  sbm.seed = 2;
  CHECK(dump(gen_sbm_node_cls(sbm)) != dump(a));
}

TEST_CASE("SBM block densities converge to the specified probabilities") {
  SbmSpec spec;
  spec.nodes = 300;
  spec.timestamps = 4;
  spec.test_timestamps = 1;
  const int C = spec.blocks;
  int cells = 0, inside = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    spec.seed = seed;
    const auto d = gen_sbm_node_cls(spec);
    for (int t = 1; t <= spec.timestamps; ++t) {
      const double s = spec.shift_at(t);
      Eigen::MatrixXd count = Eigen::MatrixXd::Zero(C, C);
      for (const Edge& e : d.graph.at(t).edges()) {
        const int a = std::min(e.u % C, e.v % C), b = std::max(e.u % C, e.v % C);
        count(a, b) += 1;
      }
      for (int a = 0; a < C; ++a)
        for (int b = a; b < C; ++b) {
          const double na = spec.nodes / C, nb = spec.nodes / C;
          const double pairs = a == b ? na * (na - 1) / 2 : na * nb;
          // Two variant draws agree when both follow the class (and the classes match) or by chance.
          const double agree = s * s * (a == b) + (1 - s * s) / C;
          const double pc = a == b ? spec.p_intra : spec.p_inter;
          const double expect = pc + spec.var_weight * (agree * spec.p_intra + (1 - agree) * spec.p_inter);
          ++cells;
          inside += std::abs(count(a, b) / pairs - expect) <= 3.0 / std::sqrt(pairs);
        }
    }
  }
  CHECK(inside >= 0.95 * cells);
}

TEST_CASE("SBM features carry class and variant signal where expected") {
  SbmSpec spec;
  spec.nodes = 300;
  spec.shift_level = 1.0;
  const auto d = gen_sbm_node_cls(spec);
  CHECK(d.graph.feature_dim == 2 * 3 + spec.noise_dims);
  CHECK(d.split.get("test_range", "") == "7-8");
  CHECK(d.split.get("val_range", "") == "6-6");
  CHECK(d.split.get("train_range", "") == "1-5");
  // With shift 1 the variant group equals the class on training snapshots.
  const Matrix& x = d.graph.at(1).features();
  int agree = 0;
  for (int v = 0; v < spec.nodes; ++v) {
    int arg;
    x.row(v).segment(3, 3).maxCoeff(&arg);
    agree += arg == v % 3;
  }
  CHECK(agree > 0.95 * spec.nodes);
  for (const auto& c : d.graph.labels.classes) CHECK(c.c == c.v % 3 + 1);
  CHECK(spec.shift_at(8) == 0.0);
  CHECK(spec.shift_at(6) == 1.0);
}

TEST_CASE("feature shift appends factorised next-step structure") {
  EnvSuiteSpec env;
  env.nodes = 40;
  env.timestamps = 4;
  const auto base = gen_env_suite(env);
  FeatureShiftSpec fs;
  fs.dim = 4;
  fs.max_iterations = 200;
  const auto d = gen_feature_shift(base.graph, fs);
  CHECK(d.graph.feature_dim == env.dim + 4);
  for (int t = 1; t <= 4; ++t) {
    CHECK(d.graph.at(t).features().leftCols(env.dim) == base.graph.at(t).features());
    CHECK(d.graph.at(t).edges() == base.graph.at(t).edges());
  }
  std::set<std::string> tags;
  for (const auto& e : d.provenance.edges) tags.insert(e.tag);
  CHECK(tags == std::set<std::string>{"base", "sampled"});
  for (const auto& e : d.provenance.edges)
    if (e.t == 1) CHECK(e.tag == "base");
  CHECK(fs.p_at(0) == doctest::Approx(0.6));
  CHECK(fs.p_at(3) == doctest::Approx(0.4 + 0.2 * std::cos(3.0)));

  // Without link labels the last snapshot becomes the prediction target.
  DynamicGraph plain = base.graph;
  plain.labels = {};
  const auto shifted = gen_feature_shift(plain, fs);
  CHECK(shifted.graph.num_timestamps() == 3);
  CHECK(shifted.graph.labels.links.size() == base.graph.at(4).edge_count());
}

TEST_CASE("factorisation fits structure and handles an empty target") {
  FeatureShiftSpec fs;
  fs.dim = 4;
  fs.max_iterations = 500;
  Eigen::MatrixXi blocks = Eigen::MatrixXi::Zero(12, 12);
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j)
      if (i != j && i / 6 == j / 6) blocks(i, j) = 1;
  auto fit = factorize_links(blocks, fs, 3, "blocks");
  const Matrix z = fit.factors * fit.factors.transpose();
  double in = 0, out = 0;
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j)
      if (i != j) (blocks(i, j) ? in : out) += z(i, j);
  CHECK(in / 60 > out / 72);
  auto empty = factorize_links(Eigen::MatrixXi::Zero(12, 12), fs, 3, "empty");
  CHECK(empty.iterations < fs.max_iterations);
  CHECK(empty.factors.allFinite());
  FeatureShiftSpec wild = fs;
  wild.learning_rate = 1e6;
  wild.init_scale = 10;
  CHECK_THROWS_AS(factorize_links(blocks, wild, 3, "wild"), NumericalError);
}

TEST_CASE("environment suites follow their construction") {
  EnvSuiteSpec spec;
  spec.nodes = 60;
  spec.hidden = 4;
  for (double g : {0.25, 0.5, 0.75, 1.0}) {
    spec.gamma_inv = g;
    CHECK(invariant_hidden(spec).size() == static_cast<std::size_t>(std::lround(4 * g)));
  }
  spec.gamma_inv = 0.5;
  auto small = invariant_hidden(spec);
  spec.gamma_inv = 0.75;
  auto big = invariant_hidden(spec);
  CHECK(std::includes(big.begin(), big.end(), small.begin(), small.end()));

  const auto d = gen_env_suite(spec);
  CHECK(d.split.get("ood_filter", "") == "K1");
  for (const auto& e : d.provenance.edges) {
    const int a = e.u % 4, b = e.v % 4;
    CHECK(e.tag == (a == b ? "K" + std::to_string(a + 1) : std::string("X")));
  }
  for (int t = 1; t <= spec.timestamps; ++t)
    CHECK(d.graph.at(t).edge_count() == static_cast<std::size_t>(spec.nodes * spec.mean_degree / 2));

  EnvSuiteSpec dyn = spec;
  dyn.mode = EnvMode::nonstationary;
  CHECK(dyn.dyn_amplitude(2) == std::sin(4.0 * dyn.timestamps));
  dyn.sin_mode = SinMode::per_step;
  CHECK(dyn.dyn_amplitude(2) == std::sin(8.0));
  dyn.ood_hidden = 0;
  CHECK_FALSE(gen_env_suite(dyn).split.has("ood_filter"));
  dyn.gamma_dyn = 0.0;
  const auto still = gen_env_suite(dyn);
  CHECK(still.graph.at(1) == Snapshot(1, dyn.nodes, still.graph.at(1).edges(), still.graph.at(2).features()));
}

TEST_CASE("top similarity edges keep the most similar pairs") {
  std::mt19937_64 rng(101);
  Matrix x = testing::random_matrix(rng, 20, 3);
  auto edges = top_similarity_edges(x, 4.0);
  CHECK(edges.size() == 40);
  const Matrix sim = kernels::serial::pairwise_cosine(x);
  double weakest_kept = 2;
  std::set<Edge> kept(edges.begin(), edges.end());
  for (const Edge& e : edges) weakest_kept = std::min(weakest_kept, sim(e.u, e.v));
  for (int u = 0; u < 20; ++u)
    for (int v = u + 1; v < 20; ++v)
      if (!kept.count({u, v})) CHECK(sim(u, v) <= weakest_kept);
  CHECK_THROWS_AS(top_similarity_edges(x, 0.01), ConfigError);
  CHECK_THROWS_AS(top_similarity_edges(x, 40), ConfigError);
}

TEST_CASE("spec files dispatch on the generator key") {
  auto kv = KvConfig::parse_string("generator = sbm\nnodes = 30\ntimestamps = 4\nseed = 3\n");
  auto d = generate_from_kv(kv);
  CHECK(d.graph.node_count == 30);
  CHECK_THROWS_AS(generate_from_kv(KvConfig::parse_string("nodes = 3\n")), ConfigError);
  CHECK_THROWS_AS(generate_from_kv(KvConfig::parse_string("generator = sbm\nnode = 3\n")), ConfigError);
  CHECK_THROWS_AS(generate_from_kv(KvConfig::parse_string("generator = nope\n")), ConfigError);
}

TEST_CASE("SBM without shift keeps train and test structure identical") {
  // Two-proportion z-test per pair type, pooled over 20 graphs.
  SbmSpec spec;
  spec.nodes = 150;
  spec.timestamps = 4;
  spec.test_timestamps = 2;
  spec.shift_level = 0.0;
  double edges[2][2] = {{0, 0}, {0, 0}}, pairs[2][2] = {{0, 0}, {0, 0}};  // [train/test][inter/intra]
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    spec.seed = seed;
    const auto d = gen_sbm_node_cls(spec);
    for (int t = 1; t <= spec.timestamps; ++t) {
      const int split = t > spec.timestamps - spec.test_timestamps;
      for (const Edge& e : d.graph.at(t).edges()) edges[split][e.u % 3 == e.v % 3] += 1;
      pairs[split][1] += 3.0 * 50 * 49 / 2;
      pairs[split][0] += 3.0 * 50 * 50;
    }
  }
  for (int kind : {0, 1}) {
    const double p1 = edges[0][kind] / pairs[0][kind], p2 = edges[1][kind] / pairs[1][kind];
    const double p = (edges[0][kind] + edges[1][kind]) / (pairs[0][kind] + pairs[1][kind]);
    const double z = (p1 - p2) / std::sqrt(p * (1 - p) * (1 / pairs[0][kind] + 1 / pairs[1][kind]));
    CHECK(std::abs(z) < 2.576);
  }
}

TEST_CASE("SBM intra-block density and class balance at desk scale") {
  SbmSpec spec;
  spec.timestamps = 3;
  spec.test_timestamps = 1;
  spec.val_timestamps = 1;
  spec.shift_level = 0.0;
  spec.var_weight = 0.0;
  const auto d = gen_sbm_node_cls(spec);
  std::vector<int> sizes(3, 0);
  for (int v = 0; v < spec.nodes; ++v) ++sizes[static_cast<std::size_t>(v % 3)];
  for (int s : sizes) CHECK(std::abs(s - spec.nodes / 3.0) <= 1.0);
  for (int t = 1; t <= 3; ++t) {
    double intra = 0, pairs = 0;
    for (int c = 0; c < 3; ++c) pairs += sizes[c] * (sizes[c] - 1) / 2.0;
    for (const Edge& e : d.graph.at(t).edges()) intra += e.u % 3 == e.v % 3;
    CHECK(std::abs(intra / pairs - spec.p_intra) <= 0.02);
  }
}

TEST_CASE("factorisation shrinks on an empty target and reconstructs a real one") {
  FeatureShiftSpec fs;
  fs.p_bar = 0.0;
  fs.sigma = 0.0;
  const int n = 100;
  const auto empty = factorize_links(Eigen::MatrixXi::Zero(n, n), fs, 11, "empty");
  CHECK(empty.factors.norm() < 0.1 * fs.init_scale * std::sqrt(double(n) * fs.dim));

  EnvSuiteSpec env;
  env.nodes = n;
  env.timestamps = 4;
  const auto base = gen_env_suite(env);
  Eigen::MatrixXi target = Eigen::MatrixXi::Zero(n, n);
  for (const Edge& e : base.graph.at(2).edges()) target(e.u, e.v) = target(e.v, e.u) = 1;
  const auto fit = factorize_links(target, FeatureShiftSpec{}, 12, "real");
  const Matrix z = fit.factors * fit.factors.transpose();
  std::vector<double> scores;
  std::vector<int> labels;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v) {
      scores.push_back(z(u, v));
      labels.push_back(target(u, v));
    }
  CHECK(auc(scores, labels) >= 0.9);
}

TEST_CASE("environment suite edge cases") {
  EnvSuiteSpec still;
  still.mode = EnvMode::nonstationary;
  still.nodes = 30;
  still.gamma_dyn = 0.0;
  const auto s = gen_env_suite(still);
  for (int t = 2; t <= still.timestamps; ++t) CHECK(s.graph.at(t).features() == s.graph.at(1).features());

  EnvSuiteSpec quiet;
  quiet.nodes = 40;
  quiet.gamma_inv = 1.0;
  CHECK(invariant_hidden(quiet).size() == static_cast<std::size_t>(quiet.hidden));

  EnvSuiteSpec two;
  two.nodes = 40;
  two.hidden = 2;
  const auto d = gen_env_suite(two);
  const auto views = ood_split_links(d.graph, d.provenance, FilterRule::parse(d.split.get("ood_filter", "")));
  CHECK(views.removed > 0);
  for (int t = 1; t <= two.timestamps; ++t)
    for (const Edge& e : views.train.at(t).edges()) CHECK(d.provenance.tag_of(t, e.u, e.v) != "K1");
  for (const auto& l : views.train.labels.links) CHECK(d.provenance.tag_of(l.t, l.u, l.v) != "K1");
}
