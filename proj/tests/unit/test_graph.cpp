#include <sstream>

#include "doctest.h"
#include "evogood/errors.hpp"
#include "evogood/graph.hpp"
#include "evogood/graph_io.hpp"
#include "testing.hpp"

using namespace evogood;

TEST_CASE("snapshot collapses duplicates and stores both directions") {
  std::vector<Edge> edges{{0, 1}, {1, 0}, {2, 1}};
  Snapshot s(1, 3, edges, Matrix::Zero(3, 2));
  CHECK(s.edge_count() == 2);
  CHECK(s.has_edge(1, 0));
  CHECK(s.has_edge(1, 2));
  CHECK_FALSE(s.has_edge(0, 2));
  CHECK(s.edges() == std::vector<Edge>{{0, 1}, {1, 2}});
  Eigen::MatrixXi a = s.dense_adjacency();
  CHECK(a == a.transpose());
  CHECK(a.sum() == 4);
}

TEST_CASE("snapshot rejects self-loops and out-of-range endpoints") {
  std::vector<Edge> loop{{1, 1}};
  CHECK_THROWS_AS(Snapshot(1, 3, loop, Matrix::Zero(3, 1)), ContractViolation);
  std::vector<Edge> far{{0, 3}};
  CHECK_THROWS_AS(Snapshot(1, 3, far, Matrix::Zero(3, 1)), ContractViolation);
}

TEST_CASE("timestamps are 1-based and checked") {
  std::mt19937_64 rng(3);
  auto g = testing::random_graph(rng, 5, 3, 2, 0.4);
  CHECK(g.at(1).timestamp() == 1);
  CHECK(g.at(3).timestamp() == 3);
  CHECK_THROWS_AS(g.at(0), IndexError);
  CHECK_THROWS_AS(g.at(4), IndexError);
  CHECK_THROWS_AS(g.edges_at(5), IndexError);
}

TEST_CASE("degree sums equal an even volume") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 20);
    auto g = testing::random_graph(rng, n, 3, 1, 0.3);
    for (int t = 1; t <= 3; ++t) {
      long sum = 0;
      for (int v = 0; v < n; ++v) sum += degree(g, v, t);
      CHECK(sum == volume(g, t));
      CHECK(volume(g, t) % 2 == 0);
      CHECK(volume(g, t) == 2 * static_cast<long>(g.at(t).edge_count()));
    }
  }
}

TEST_CASE("dataset text round-trip is exact") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const LabelKind kind = trial % 3 == 0 ? LabelKind::none
                           : trial % 3 == 1 ? LabelKind::link_occurrence
                                            : LabelKind::node_class;
    auto g = testing::random_graph(rng, 3 + trial % 9, 1 + trial % 4, 1 + trial % 3, 0.3, kind);
    std::stringstream ss;
    write_dataset(ss, g);
    DynamicGraph back = read_dataset(ss);
    CHECK(back == g);
    std::stringstream again;
    write_dataset(again, back);
    std::stringstream first;
    write_dataset(first, g);
    CHECK(again.str() == first.str());
  }
}

TEST_CASE("format_real round-trips awkward doubles") {
  for (double x : {0.1, -1e-300, 1.0 / 3.0, 6.02214076e23, -0.0, 5e-324}) {
    CHECK(parse_real(format_real(x), 1) == x);
  }
  CHECK_THROWS_AS(parse_real("1.5x", 7), ParseError);
}

TEST_CASE("malformed datasets report the offending line") {
  auto line_of = [](const std::string& text) {
    std::istringstream in(text);
    try {
      read_dataset(in);
    } catch (const ParseError& e) {
      return e.line();
    }
    return -1;
  };
  CHECK(line_of("") == 1);
  CHECK(line_of("EVG2 2 1 1 none\n") == 1);
  CHECK(line_of("EVG1 2 1 1 none\n#t 1\nE 0 x\n") == 3);
  CHECK(line_of("EVG1 2 1 1 none\n#t 1\nX 0 1\nX 1 zz\n") == 4);
  CHECK(line_of("EVG1 2 1 1 none\n#t 1\nE 0 1\nX 0 1\nX 1 2\nQ 1\n") == 6);
}

TEST_CASE("validate reports asymmetry, self-loops and duplicates") {
  DynamicGraph g;
  g.node_count = 3;
  g.feature_dim = 1;
  g.snapshots.push_back(Snapshot::from_rows(1, {{1, 1}, {}, {2}}, Matrix::Zero(3, 1)));
  auto v = validate(g);
  auto has = [&](const std::string& kind) {
    return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.kind == kind; });
  };
  CHECK(has("asymmetry"));
  CHECK(has("self_loop"));
  CHECK(has("non_binary"));

  DynamicGraph bad_dims;
  bad_dims.node_count = 2;
  bad_dims.feature_dim = 1;
  std::vector<Edge> e{{0, 1}};
  bad_dims.snapshots.emplace_back(1, 2, e, Matrix::Zero(3, 1));
  auto w = validate(bad_dims);
  REQUIRE_FALSE(w.empty());
  CHECK(w[0].kind == "dimension_mismatch");

  std::mt19937_64 rng(2);
  CHECK(validate(testing::random_graph(rng, 6, 2, 2, 0.5, LabelKind::node_class)).empty());
}

TEST_CASE("prefix keeps the first snapshots and drops future labels") {
  std::mt19937_64 rng(8);
  auto g = testing::random_graph(rng, 6, 4, 2, 0.4, LabelKind::node_class);
  auto p = g.prefix(2);
  CHECK(p.num_timestamps() == 2);
  CHECK(p.at(2) == g.at(2));
  for (const auto& c : p.labels.classes) CHECK(c.t <= 2);
  auto l = testing::random_graph(rng, 6, 3, 2, 0.4, LabelKind::link_occurrence);
  CHECK(l.prefix(3).labels.links.empty());
  CHECK(l.edges_at(4).size() == l.labels.links.size());
}

TEST_CASE("permutation moves edges and features together") {
  std::mt19937_64 rng(4);
  auto g = testing::random_graph(rng, 7, 2, 3, 0.4);
  auto perm = testing::random_permutation(rng, 7);
  auto pg = permute_nodes(g, perm);
  for (int t = 1; t <= 2; ++t) {
    CHECK(pg.at(t).edge_count() == g.at(t).edge_count());
    for (const Edge& e : g.at(t).edges()) CHECK(pg.at(t).has_edge(perm[e.u], perm[e.v]));
    for (int v = 0; v < 7; ++v) CHECK(pg.at(t).features().row(perm[v]) == g.at(t).features().row(v));
  }
}

TEST_CASE("provenance round-trip and lookup") {
  Provenance p;
  p.edges = {{1, 0, 1, "inv.B1-1"}, {1, 2, 4, "var.B1-2"}, {2, 0, 3, "K2"}};
  std::stringstream ss;
  write_provenance(ss, p);
  Provenance back = read_provenance(ss);
  CHECK(back == p);
  CHECK(back.tag_of(1, 2, 4) == "var.B1-2");
  CHECK(back.tag_of(1, 4, 2) == "var.B1-2");
  CHECK(back.tag_of(2, 0, 1).empty());
}
