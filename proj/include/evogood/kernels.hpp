#pragma once

// Data-parallel inner loops. Every kernel has an OpenMP implementation in
// `parallel` and a straightforward serial reference in `serial`; the tests
// check they agree and bench/ compares their speed. Parallel kernels are
// deterministic: each output element is owned by exactly one thread and
// reductions run in a fixed order.

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace evogood::kernels {

using Matrix = Eigen::MatrixXd;

/// Compressed adjacency rows. For a symmetric graph `reverse[e]` is the
/// position of edge (v -> u) when e is the position of (u -> v).
struct Csr {
  std::span<const int> offsets;  // N + 1
  std::span<const int> indices;
  int node_count() const { return static_cast<int>(offsets.size()) - 1; }
};

std::vector<int> reverse_index(const Csr& g);

/// Per-edge state kept from the attention forward pass. Edge e is the e-th
/// entry of the CSR, i.e. the message from source indices[e] into the
/// destination row it belongs to.
struct AttentionCache {
  Matrix alpha;  // E x heads, softmax weights per destination
  Matrix pre;    // E x heads, scores before LeakyReLU
};

struct AttentionGrads {
  Matrix dz;      // N x d
  Matrix da_src;  // heads x d
  Matrix da_dst;  // heads x d
};

// Multi-head additive graph attention with residual:
//   s^k_uv = a_dst^k . z_v + a_src^k . z_u,  alpha^k_uv = softmax_{u in N(v)} LeakyReLU(s^k_uv)
//   out_v  = z_v + (1/heads) sum_k sum_{u in N(v)} alpha^k_uv z_u

namespace serial {
Matrix attention_forward(const Csr& g, const Matrix& z, const Matrix& a_src, const Matrix& a_dst,
                         double slope, AttentionCache& cache);
AttentionGrads attention_backward(const Csr& g, const Matrix& z, const Matrix& a_src, const Matrix& a_dst,
                                  double slope, const AttentionCache& cache, const Matrix& grad_out);
Matrix pairwise_cosine(const Matrix& x);
void assign_nearest(const Matrix& points, const Matrix& centroids, std::span<int> assignment,
                    std::span<double> distance2);
}  // namespace serial

namespace parallel {
Matrix attention_forward(const Csr& g, const Matrix& z, const Matrix& a_src, const Matrix& a_dst,
                         double slope, AttentionCache& cache);
AttentionGrads attention_backward(const Csr& g, std::span<const int> reverse, const Matrix& z,
                                  const Matrix& a_src, const Matrix& a_dst, double slope,
                                  const AttentionCache& cache, const Matrix& grad_out);
Matrix pairwise_cosine(const Matrix& x);
void assign_nearest(const Matrix& points, const Matrix& centroids, std::span<int> assignment,
                    std::span<double> distance2);
}  // namespace parallel

}  // namespace evogood::kernels
