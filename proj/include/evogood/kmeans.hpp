#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace evogood {

struct KMeansResult {
  std::vector<int> assignment;  // 0-based cluster per row
  Eigen::MatrixXd centroids;
  double inertia = 0.0;
};

/// Lloyd's algorithm with k-means++ seeding; the restart with the lowest
/// inertia wins. Empty clusters are re-seeded with the farthest point.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, int restarts, std::uint64_t seed, int max_iter = 100);

}  // namespace evogood
