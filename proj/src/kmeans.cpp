#include "evogood/kmeans.hpp"

#include <limits>
#include <random>

#include "evogood/errors.hpp"
#include "evogood/kernels.hpp"

namespace evogood {

namespace {

Eigen::MatrixXd seed_plus_plus(const Eigen::MatrixXd& x, int k, std::mt19937_64& rng) {
  const auto n = x.rows();
  Eigen::MatrixXd c(k, x.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  c.row(0) = x.row(pick(rng));
  Eigen::VectorXd d2 = (x.rowwise() - c.row(0)).rowwise().squaredNorm();
  for (int j = 1; j < k; ++j) {
    const double total = d2.sum();
    Eigen::Index chosen = 0;
    if (total <= 0.0) {
      chosen = pick(rng);
    } else {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      for (chosen = 0; chosen < n - 1; ++chosen) {
        r -= d2(chosen);
        if (r <= 0.0) break;
      }
    }
    c.row(j) = x.row(chosen);
    d2 = d2.cwiseMin((x.rowwise() - c.row(j)).rowwise().squaredNorm());
  }
  return c;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, int restarts, std::uint64_t seed, int max_iter) {
  const auto n = points.rows();
  if (k < 1) throw ConfigError("k-means needs k >= 1");
  if (n < k) throw ConfigError("k-means needs at least k=" + std::to_string(k) + " points, got " + std::to_string(n));
  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  std::vector<int> assign(static_cast<std::size_t>(n));
  std::vector<double> dist(static_cast<std::size_t>(n));

  for (int r = 0; r < std::max(1, restarts); ++r) {
    Eigen::MatrixXd c = seed_plus_plus(points, k, rng);
    std::vector<int> prev;
    for (int it = 0; it < max_iter; ++it) {
      kernels::parallel::assign_nearest(points, c, assign, dist);
      if (assign == prev) break;
      prev = assign;
      Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(k, points.cols());
      std::vector<int> count(static_cast<std::size_t>(k), 0);
      for (Eigen::Index i = 0; i < n; ++i) {
        sum.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
        ++count[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
      }
      for (int j = 0; j < k; ++j) {
        if (count[static_cast<std::size_t>(j)] > 0) {
          c.row(j) = sum.row(j) / count[static_cast<std::size_t>(j)];
        } else {
          Eigen::Index far = 0;
          for (Eigen::Index i = 1; i < n; ++i)
            if (dist[static_cast<std::size_t>(i)] > dist[static_cast<std::size_t>(far)]) far = i;
          c.row(j) = points.row(far);
          dist[static_cast<std::size_t>(far)] = 0.0;
        }
      }
    }
    kernels::parallel::assign_nearest(points, c, assign, dist);
    double inertia = 0.0;
    for (double d : dist) inertia += d;
    if (inertia < best.inertia) {
      best.inertia = inertia;
      best.assignment = assign;
      best.centroids = c;
    }
  }
  return best;
}

}  // namespace evogood
