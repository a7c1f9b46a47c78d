#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace evogood {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct Edge {
  int u = 0;
  int v = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// One timestamp of a dynamic graph: a binary adjacency (stored as sorted
/// neighbour rows) and an N x d feature matrix. Immutable after construction.
class Snapshot {
 public:
  Snapshot() = default;

  /// Builds a symmetric snapshot from undirected edges. Duplicates collapse;
  /// self-loops and out-of-range endpoints throw ContractViolation.
  Snapshot(int timestamp, int node_count, std::span<const Edge> edges, Matrix features);

  /// Raw adjacency rows, stored as given (sorted, duplicates kept). Used to
  /// represent possibly ill-formed input for validate().
  static Snapshot from_rows(int timestamp, std::vector<std::vector<int>> rows, Matrix features);

  int timestamp() const noexcept { return timestamp_; }
  int node_count() const noexcept { return static_cast<int>(offsets_.size()) - 1; }
  const Matrix& features() const noexcept { return features_; }

  std::span<const int> neighbors(int v) const {
    return {indices_.data() + offsets_[v], indices_.data() + offsets_[v + 1]};
  }
  const std::vector<int>& offsets() const noexcept { return offsets_; }
  const std::vector<int>& indices() const noexcept { return indices_; }

  /// Undirected edges u < v, sorted.
  std::vector<Edge> edges() const;
  std::size_t edge_count() const;
  bool has_edge(int u, int v) const;
  Eigen::MatrixXi dense_adjacency() const;

  friend bool operator==(const Snapshot& a, const Snapshot& b);

 private:
  int timestamp_ = 1;
  std::vector<int> offsets_{0};
  std::vector<int> indices_;
  Matrix features_;
};

enum class LabelKind { none, link_occurrence, node_class };

struct LinkLabel {
  int u = 0;
  int v = 0;
  int t = 0;
  friend bool operator==(const LinkLabel&, const LinkLabel&) = default;
  friend auto operator<=>(const LinkLabel&, const LinkLabel&) = default;
};

struct ClassLabel {
  int v = 0;
  int t = 0;
  int c = 1;  // 1..num_classes
  friend bool operator==(const ClassLabel&, const ClassLabel&) = default;
};

struct LabelSet {
  LabelKind kind = LabelKind::none;
  std::vector<LinkLabel> links;
  std::vector<ClassLabel> classes;
  int num_classes = 0;
  friend bool operator==(const LabelSet&, const LabelSet&) = default;
};

/// Ordered snapshots over a fixed node universe. Timestamps are 1..T.
struct DynamicGraph {
  int node_count = 0;
  int feature_dim = 0;
  std::vector<Snapshot> snapshots;
  LabelSet labels;

  int num_timestamps() const noexcept { return static_cast<int>(snapshots.size()); }
  const Snapshot& at(int t) const;  // 1-based

  /// Positive edges at timestamp t in 1..T+1: snapshot edges for t <= T,
  /// link labels for t = T+1.
  std::vector<Edge> edges_at(int t) const;

  /// First t snapshots; link labels are dropped, class labels restricted to <= t.
  DynamicGraph prefix(int t) const;

  friend bool operator==(const DynamicGraph&, const DynamicGraph&) = default;
};

struct Violation {
  int t = 0;        // 0 when not timestamp-specific
  int node = -1;
  int other = -1;
  std::string kind;  // asymmetry, self_loop, non_binary, dimension_mismatch, ...
  std::string message;
};

std::vector<Violation> validate(const DynamicGraph& g);

int degree(const DynamicGraph& g, int v, int t);
long volume(const DynamicGraph& g, int t);

/// Apply a node permutation: new index perm[v] for old node v.
DynamicGraph permute_nodes(const DynamicGraph& g, std::span<const int> perm);

}  // namespace evogood
