#pragma once

// Shared fixtures for the test binaries: random graph generators and a
// central finite-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "evogood/autodiff.hpp"
#include "evogood/graph.hpp"

namespace evogood::testing {

inline Matrix random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = nd(rng);
  return m;
}

inline std::vector<Edge> random_edges(std::mt19937_64& rng, int n, double p) {
  std::bernoulli_distribution coin(p);
  std::vector<Edge> out;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (coin(rng)) out.push_back({u, v});
  return out;
}

/// Erdos-Renyi snapshots with Gaussian features. Every snapshot gets at least
/// one edge so entropy-based code has a defined input.
inline DynamicGraph random_graph(std::mt19937_64& rng, int n, int T, int d, double p,
                                 LabelKind kind = LabelKind::none, int classes = 3) {
  DynamicGraph g;
  g.node_count = n;
  g.feature_dim = d;
  for (int t = 1; t <= T; ++t) {
    auto edges = random_edges(rng, n, p);
    if (edges.empty()) edges.push_back({0, 1});
    g.snapshots.emplace_back(t, n, edges, random_matrix(rng, n, d));
  }
  g.labels.kind = kind;
  if (kind == LabelKind::link_occurrence) {
    auto next = random_edges(rng, n, p);
    if (next.empty()) next.push_back({0, n - 1});
    for (const Edge& e : next) g.labels.links.push_back({e.u, e.v, T + 1});
  } else if (kind == LabelKind::node_class) {
    g.labels.num_classes = classes;
    std::uniform_int_distribution<int> cls(1, classes);
    for (int t = 1; t <= T; ++t)
      for (int v = 0; v < n; ++v) g.labels.classes.push_back({v, t, cls(rng)});
  }
  return g;
}

inline std::vector<int> random_permutation(std::mt19937_64& rng, int n) {
  std::vector<int> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

struct FdResult {
  double max_rel = 0.0;
  std::string where;
  int checked = 0;
};

inline double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

/// Compare analytic gradients of `loss` against central differences for the
/// listed parameters. `loss` must bind the parameters through tape.param and
/// be a deterministic function of their values. Every `stride`-th entry of
/// each tensor is perturbed.
inline FdResult finite_difference(const std::vector<ad::Parameter*>& params,
                                  const std::function<ad::Var(ad::Tape&)>& loss, double eps = 1e-4,
                                  int stride = 1) {
  for (auto* p : params) p->zero_grad();
  {
    ad::Tape tape(true);
    ad::Var root = loss(tape);
    tape.backward(root);
  }
  FdResult out;
  for (auto* p : params) {
    const Matrix analytic = p->grad;
    const Eigen::Index total = p->value.size();
    for (Eigen::Index k = 0; k < total; k += stride) {
      double& x = p->value.data()[k];
      const double x0 = x;
      x = x0 + eps;
      double up, down;
      {
        ad::Tape tape(false);
        up = loss(tape).scalar();
      }
      x = x0 - eps;
      {
        ad::Tape tape(false);
        down = loss(tape).scalar();
      }
      x = x0;
      const double numeric = (up - down) / (2 * eps);
      const double rel = relative_error(analytic.data()[k], numeric);
      ++out.checked;
      if (rel > out.max_rel) {
        out.max_rel = rel;
        out.where = p->name + "[" + std::to_string(k) + "] analytic=" + std::to_string(analytic.data()[k]) +
                    " numeric=" + std::to_string(numeric);
      }
    }
  }
  return out;
}

}  // namespace evogood::testing
