#include <cmath>
#include <limits>

#include "evogood/errors.hpp"
#include "evogood/kernels.hpp"

namespace evogood::kernels {

std::vector<int> reverse_index(const Csr& g) {
  const int n = g.node_count();
  std::vector<int> rev(g.indices.size(), -1);
  for (int v = 0; v < n; ++v) {
    for (int e = g.offsets[v]; e < g.offsets[v + 1]; ++e) {
      const int u = g.indices[e];
      // binary search v inside row u
      int lo = g.offsets[u], hi = g.offsets[u + 1];
      while (lo < hi) {
        const int mid = (lo + hi) / 2;
        if (g.indices[mid] < v) lo = mid + 1;
        else hi = mid;
      }
      if (lo == g.offsets[u + 1] || g.indices[lo] != v)
        throw ContractViolation("reverse_index requires a symmetric adjacency");
      rev[static_cast<std::size_t>(e)] = lo;
    }
  }
  return rev;
}

namespace serial {

Matrix attention_forward(const Csr& g, const Matrix& z, const Matrix& a_src, const Matrix& a_dst,
                         double slope, AttentionCache& cache) {
  const int n = g.node_count();
  const auto heads = a_src.rows();
  const auto edges = static_cast<Eigen::Index>(g.indices.size());
  cache.pre.resize(edges, heads);
  cache.alpha.resize(edges, heads);
  const Matrix dst_score = z * a_dst.transpose();  // N x heads
  const Matrix src_score = z * a_src.transpose();
  for (int v = 0; v < n; ++v)
    for (int e = g.offsets[v]; e < g.offsets[v + 1]; ++e)
      for (Eigen::Index k = 0; k < heads; ++k)
        cache.pre(e, k) = dst_score(v, k) + src_score(g.indices[e], k);

  Matrix out = z;
  for (int v = 0; v < n; ++v) {
    const int begin = g.offsets[v], end = g.offsets[v + 1];
    if (begin == end) continue;
    for (Eigen::Index k = 0; k < heads; ++k) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int e = begin; e < end; ++e) {
        const double p = cache.pre(e, k);
        const double act = p > 0 ? p : slope * p;
        mx = std::max(mx, act);
      }
      double total = 0.0;
      for (int e = begin; e < end; ++e) {
        const double p = cache.pre(e, k);
        const double act = p > 0 ? p : slope * p;
        cache.alpha(e, k) = std::exp(act - mx);
        total += cache.alpha(e, k);
      }
      for (int e = begin; e < end; ++e) {
        cache.alpha(e, k) /= total;
        out.row(v) += (cache.alpha(e, k) / static_cast<double>(heads)) * z.row(g.indices[e]);
      }
    }
  }
  return out;
}

AttentionGrads attention_backward(const Csr& g, const Matrix& z, const Matrix& a_src, const Matrix& a_dst,
                                  double slope, const AttentionCache& cache, const Matrix& grad_out) {
  const int n = g.node_count();
  const auto heads = a_src.rows();
  const double inv_h = 1.0 / static_cast<double>(heads);
  AttentionGrads out{grad_out, Matrix::Zero(a_src.rows(), a_src.cols()), Matrix::Zero(a_dst.rows(), a_dst.cols())};
  for (int v = 0; v < n; ++v) {
    const int begin = g.offsets[v], end = g.offsets[v + 1];
    for (Eigen::Index k = 0; k < heads; ++k) {
      double dot = 0.0;
      for (int e = begin; e < end; ++e) {
        const double dalpha = inv_h * grad_out.row(v).dot(z.row(g.indices[e]));
        dot += cache.alpha(e, k) * dalpha;
      }
      for (int e = begin; e < end; ++e) {
        const int u = g.indices[e];
        const double alpha = cache.alpha(e, k);
        const double dalpha = inv_h * grad_out.row(v).dot(z.row(u));
        const double de = alpha * (dalpha - dot);
        const double ds = de * (cache.pre(e, k) > 0 ? 1.0 : slope);
        out.da_dst.row(k) += ds * z.row(v);
        out.da_src.row(k) += ds * z.row(u);
        out.dz.row(v) += ds * a_dst.row(k);
        out.dz.row(u) += ds * a_src.row(k);
        out.dz.row(u) += (alpha * inv_h) * grad_out.row(v);
      }
    }
  }
  return out;
}

Matrix pairwise_cosine(const Matrix& x) {
  const auto n = x.rows();
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double ni = x.row(i).norm(), nj = x.row(j).norm();
      out(i, j) = (ni == 0.0 || nj == 0.0) ? 0.0 : x.row(i).dot(x.row(j)) / (ni * nj);
    }
  }
  return out;
}

void assign_nearest(const Matrix& points, const Matrix& centroids, std::span<int> assignment,
                    std::span<double> distance2) {
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
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

}  // namespace serial
}  // namespace evogood::kernels
