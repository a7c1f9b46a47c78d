#include <cmath>
#include <limits>
#include <vector>

#include <omp.h>

#include "evogood/kernels.hpp"

namespace evogood::kernels::parallel {

Matrix attention_forward(const Csr& g, const Matrix& z, const Matrix& a_src, const Matrix& a_dst,
                         double slope, AttentionCache& cache) {
  const int n = g.node_count();
  const auto heads = a_src.rows();
  const auto d = z.cols();
  const auto edges = static_cast<Eigen::Index>(g.indices.size());
  cache.pre.resize(edges, heads);
  cache.alpha.resize(edges, heads);
  const Matrix dst_score = z * a_dst.transpose();
  const Matrix src_score = z * a_src.transpose();
  const double inv_h = 1.0 / static_cast<double>(heads);
  Matrix out = z;

#pragma omp parallel for schedule(dynamic, 64)
  for (int v = 0; v < n; ++v) {
    const int begin = g.offsets[v], end = g.offsets[v + 1];
    if (begin == end) continue;
    for (Eigen::Index k = 0; k < heads; ++k) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int e = begin; e < end; ++e) {
        const double p = dst_score(v, k) + src_score(g.indices[e], k);
        cache.pre(e, k) = p;
        mx = std::max(mx, p > 0 ? p : slope * p);
      }
      double total = 0.0;
      for (int e = begin; e < end; ++e) {
        const double p = cache.pre(e, k);
        const double w = std::exp((p > 0 ? p : slope * p) - mx);
        cache.alpha(e, k) = w;
        total += w;
      }
      const double inv_total = 1.0 / total;
      for (int e = begin; e < end; ++e) cache.alpha(e, k) *= inv_total;
    }
    for (int e = begin; e < end; ++e) {
      const double w = cache.alpha.row(e).sum() * inv_h;
      const int u = g.indices[e];
      for (Eigen::Index j = 0; j < d; ++j) out(v, j) += w * z(u, j);
    }
  }
  return out;
}

AttentionGrads attention_backward(const Csr& g, std::span<const int> reverse, const Matrix& z,
                                  const Matrix& a_src, const Matrix& a_dst, double slope,
                                  const AttentionCache& cache, const Matrix& grad_out) {
  const int n = g.node_count();
  const auto heads = a_src.rows();
  const double inv_h = 1.0 / static_cast<double>(heads);
  const auto edges = static_cast<Eigen::Index>(g.indices.size());

  Matrix ds(edges, heads);
  Matrix sum_dst = Matrix::Zero(n, heads);
  Matrix sum_src = Matrix::Zero(n, heads);
  Matrix dz = grad_out;

  // Destination-owned pass: score gradients and the a_dst path into dz_v.
#pragma omp parallel
  {
    std::vector<double> dalpha;
#pragma omp for schedule(dynamic, 64)
    for (int v = 0; v < n; ++v) {
      const int begin = g.offsets[v], end = g.offsets[v + 1];
      if (begin == end) continue;
      dalpha.resize(static_cast<std::size_t>(end - begin));
      for (int e = begin; e < end; ++e)
        dalpha[static_cast<std::size_t>(e - begin)] = inv_h * grad_out.row(v).dot(z.row(g.indices[e]));
      for (Eigen::Index k = 0; k < heads; ++k) {
        double dot = 0.0;
        for (int e = begin; e < end; ++e) dot += cache.alpha(e, k) * dalpha[static_cast<std::size_t>(e - begin)];
        for (int e = begin; e < end; ++e) {
          const double de = cache.alpha(e, k) * (dalpha[static_cast<std::size_t>(e - begin)] - dot);
          ds(e, k) = de * (cache.pre(e, k) > 0 ? 1.0 : slope);
        }
      }
      for (int e = begin; e < end; ++e)
        for (Eigen::Index k = 0; k < heads; ++k) sum_dst(v, k) += ds(e, k);
      dz.row(v) += sum_dst.row(v) * a_dst;
    }
  }

  // Source-owned pass: messages into dz_u and the a_src path.
#pragma omp parallel for schedule(dynamic, 64)
  for (int u = 0; u < n; ++u) {
    for (int p = g.offsets[u]; p < g.offsets[u + 1]; ++p) {
      const int v = g.indices[p];
      const int e = reverse[static_cast<std::size_t>(p)];  // edge u -> v in row v
      const double w = cache.alpha.row(e).sum() * inv_h;
      dz.row(u) += w * grad_out.row(v);
      for (Eigen::Index k = 0; k < heads; ++k) sum_src(u, k) += ds(e, k);
    }
    dz.row(u) += sum_src.row(u) * a_src;
  }

  return {std::move(dz), sum_src.transpose() * z, sum_dst.transpose() * z};
}

Matrix pairwise_cosine(const Matrix& x) {
  const auto n = x.rows();
  Eigen::VectorXd norms = x.rowwise().norm();
  Matrix out(n, n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double denom = norms(i) * norms(j);
      out(i, j) = denom == 0.0 ? 0.0 : x.row(i).dot(x.row(j)) / denom;
    }
  }
  return out;
}

void assign_nearest(const Matrix& points, const Matrix& centroids, std::span<int> assignment,
                    std::span<double> distance2) {
  const auto n = points.rows();
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
      const double d = (points.row(i) - centroids.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    assignment[static_cast<std::size_t>(i)] = best;
    distance2[static_cast<std::size_t>(i)] = best_d;
  }
}

}  // namespace evogood::kernels::parallel
