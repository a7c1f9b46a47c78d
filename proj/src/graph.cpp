#include "evogood/graph.hpp"

#include <algorithm>
#include <cmath>

#include "evogood/errors.hpp"

namespace evogood {

Snapshot::Snapshot(int timestamp, int node_count, std::span<const Edge> edges, Matrix features)
    : timestamp_(timestamp), features_(std::move(features)) {
  if (node_count < 0) throw ContractViolation("negative node count");
  std::vector<std::vector<int>> rows(static_cast<std::size_t>(node_count));
  for (const Edge& e : edges) {
    if (e.u < 0 || e.v < 0 || e.u >= node_count || e.v >= node_count)
      throw ContractViolation("edge endpoint out of range: (" + std::to_string(e.u) + "," +
                              std::to_string(e.v) + ")");
    if (e.u == e.v) throw ContractViolation("self-loop at node " + std::to_string(e.u));
    rows[e.u].push_back(e.v);
    rows[e.v].push_back(e.u);
  }
  offsets_.assign(1, 0);
  for (auto& r : rows) {
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    indices_.insert(indices_.end(), r.begin(), r.end());
    offsets_.push_back(static_cast<int>(indices_.size()));
  }
}

Snapshot Snapshot::from_rows(int timestamp, std::vector<std::vector<int>> rows, Matrix features) {
  Snapshot s;
  s.timestamp_ = timestamp;
  s.features_ = std::move(features);
  s.offsets_.assign(1, 0);
  for (auto& r : rows) {
    std::sort(r.begin(), r.end());
    s.indices_.insert(s.indices_.end(), r.begin(), r.end());
    s.offsets_.push_back(static_cast<int>(s.indices_.size()));
  }
  return s;
}

std::vector<Edge> Snapshot::edges() const {
  std::vector<Edge> out;
  for (int u = 0; u < node_count(); ++u)
    for (int v : neighbors(u))
      if (u < v) out.push_back({u, v});
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t Snapshot::edge_count() const { return edges().size(); }

bool Snapshot::has_edge(int u, int v) const {
  auto row = neighbors(u);
  return std::binary_search(row.begin(), row.end(), v);
}

Eigen::MatrixXi Snapshot::dense_adjacency() const {
  const int n = node_count();
  Eigen::MatrixXi a = Eigen::MatrixXi::Zero(n, n);
  for (int u = 0; u < n; ++u)
    for (int v : neighbors(u))
      if (v >= 0 && v < n) a(u, v) += 1;
  return a;
}

bool operator==(const Snapshot& a, const Snapshot& b) {
  if (a.timestamp_ != b.timestamp_ || a.offsets_ != b.offsets_ || a.indices_ != b.indices_)
    return false;
  if (a.features_.rows() != b.features_.rows() || a.features_.cols() != b.features_.cols())
    return false;
  return a.features_ == b.features_;
}

const Snapshot& DynamicGraph::at(int t) const {
  if (t < 1 || t > num_timestamps())
    throw IndexError("timestamp " + std::to_string(t) + " outside 1.." +
                     std::to_string(num_timestamps()));
  return snapshots[static_cast<std::size_t>(t - 1)];
}

std::vector<Edge> DynamicGraph::edges_at(int t) const {
  const int T = num_timestamps();
  if (t >= 1 && t <= T) return at(t).edges();
  if (t == T + 1) {
    std::vector<Edge> out;
    for (const auto& l : labels.links)
      if (l.t == t) out.push_back({std::min(l.u, l.v), std::max(l.u, l.v)});
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
  throw IndexError("no edges defined at timestamp " + std::to_string(t));
}

DynamicGraph DynamicGraph::prefix(int t) const {
  if (t < 1 || t > num_timestamps()) throw IndexError("prefix length out of range");
  DynamicGraph g;
  g.node_count = node_count;
  g.feature_dim = feature_dim;
  g.snapshots.assign(snapshots.begin(), snapshots.begin() + t);
  g.labels.kind = labels.kind;
  g.labels.num_classes = labels.num_classes;
  for (const auto& c : labels.classes)
    if (c.t <= t) g.labels.classes.push_back(c);
  return g;
}

std::vector<Violation> validate(const DynamicGraph& g) {
  std::vector<Violation> out;
  auto add = [&](int t, int node, int other, std::string kind, std::string msg) {
    out.push_back({t, node, other, std::move(kind), std::move(msg)});
  };
  const int n = g.node_count;
  for (std::size_t i = 0; i < g.snapshots.size(); ++i) {
    const Snapshot& s = g.snapshots[i];
    const int t = s.timestamp();
    if (t != static_cast<int>(i) + 1)
      add(t, -1, -1, "timestamp_order",
          "snapshot " + std::to_string(i + 1) + " carries timestamp " + std::to_string(t));
    if (s.node_count() != n) {
      add(t, -1, -1, "node_count_mismatch",
          "adjacency has " + std::to_string(s.node_count()) + " rows, expected " +
              std::to_string(n));
      continue;
    }
    if (s.features().rows() != n)
      add(t, -1, -1, "dimension_mismatch",
          "features have " + std::to_string(s.features().rows()) + " rows, expected " +
              std::to_string(n));
    if (s.features().cols() != g.feature_dim)
      add(t, -1, -1, "feature_dim_mismatch",
          "features have " + std::to_string(s.features().cols()) + " columns, expected " +
              std::to_string(g.feature_dim));
    if (!s.features().allFinite()) add(t, -1, -1, "non_finite_feature", "feature matrix has NaN/Inf");
    for (int u = 0; u < n; ++u) {
      auto row = s.neighbors(u);
      for (std::size_t k = 0; k < row.size(); ++k) {
        const int v = row[k];
        if (v < 0 || v >= n) {
          add(t, u, v, "index_out_of_range", "neighbour index out of range");
          continue;
        }
        if (v == u) add(t, u, u, "self_loop", "self-loop on diagonal");
        if (k > 0 && row[k - 1] == v) add(t, u, v, "non_binary", "adjacency entry greater than 1");
        if (u < v && !s.has_edge(v, u))
          add(t, u, v, "asymmetry", "A[u][v]=1 but A[v][u]=0");
        if (u > v && !s.has_edge(v, u))
          add(t, v, u, "asymmetry", "A[v][u]=1 but A[u][v]=0");
      }
    }
  }
  const int T = g.num_timestamps();
  for (const auto& l : g.labels.links) {
    if (l.u < 0 || l.u >= n || l.v < 0 || l.v >= n)
      add(l.t, l.u, l.v, "label_index", "link label node out of range");
    if (l.t < 1 || l.t > T + 1) add(l.t, l.u, l.v, "label_timestamp", "link label timestamp out of range");
  }
  for (const auto& c : g.labels.classes) {
    if (c.v < 0 || c.v >= n) add(c.t, c.v, -1, "label_index", "class label node out of range");
    if (c.t < 1 || c.t > T + 1) add(c.t, c.v, -1, "label_timestamp", "class label timestamp out of range");
    if (c.c < 1 || c.c > g.labels.num_classes)
      add(c.t, c.v, -1, "label_class", "class " + std::to_string(c.c) + " outside 1.." +
                                           std::to_string(g.labels.num_classes));
  }
  return out;
}

int degree(const DynamicGraph& g, int v, int t) {
  const Snapshot& s = g.at(t);
  if (v < 0 || v >= s.node_count()) throw IndexError("node " + std::to_string(v) + " out of range");
  return static_cast<int>(s.neighbors(v).size());
}

long volume(const DynamicGraph& g, int t) {
  const Snapshot& s = g.at(t);
  return static_cast<long>(s.indices().size());
}

DynamicGraph permute_nodes(const DynamicGraph& g, std::span<const int> perm) {
  if (static_cast<int>(perm.size()) != g.node_count) throw ContractViolation("permutation size mismatch");
  DynamicGraph out;
  out.node_count = g.node_count;
  out.feature_dim = g.feature_dim;
  for (const Snapshot& s : g.snapshots) {
    std::vector<Edge> edges;
    for (const Edge& e : s.edges()) edges.push_back({perm[e.u], perm[e.v]});
    Matrix x(s.features().rows(), s.features().cols());
    for (int v = 0; v < g.node_count; ++v) x.row(perm[v]) = s.features().row(v);
    out.snapshots.emplace_back(s.timestamp(), g.node_count, edges, std::move(x));
  }
  out.labels.kind = g.labels.kind;
  out.labels.num_classes = g.labels.num_classes;
  for (auto l : g.labels.links) out.labels.links.push_back({perm[l.u], perm[l.v], l.t});
  for (auto c : g.labels.classes) out.labels.classes.push_back({perm[c.v], c.t, c.c});
  return out;
}

}  // namespace evogood
