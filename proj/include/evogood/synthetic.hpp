#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evogood/graph.hpp"
#include "evogood/graph_io.hpp"
#include "evogood/kv_config.hpp"

namespace evogood {

/// A generated dataset with provenance tags and the split it was built for.
struct SyntheticDataset {
  DynamicGraph graph;
  Provenance provenance;
  KvConfig split;  // train_range, val_range, test_range and, when declared, ood_filter
  long warnings = 0;  // edge probabilities clipped into [0, 1]
};

/// Node classification under structural and feature shift. Classes are
/// assigned round-robin and never change. Every node also carries a variant
/// group per timestamp that equals its class with probability shift, else is
/// uniform; test timestamps use shift 0. A pair links with probability
/// p(class match) + var_weight * p(group match), so the variant factor keeps
/// its strength while its relation to the labels follows the shift.
struct SbmSpec {
  int nodes = 500;
  int timestamps = 8;
  int blocks = 3;
  double p_intra = 0.05;
  double p_inter = 0.005;
  double shift_level = 0.6;
  int test_timestamps = 2;  // the last ones
  int val_timestamps = 1;
  double inv_signal = 1.0;  // class one-hot scale in the invariant block
  double inv_noise = 1.0;
  double var_signal = 1.0;  // variant-group one-hot scale
  double var_noise = 0.1;
  double var_weight = 1.0;  // scale of the group-driven link probability
  int noise_dims = 4;
  std::uint64_t seed = 1;

  void check() const;
  double shift_at(int t) const;  // shift_level for train/val timestamps, 0 for test
  static SbmSpec from_kv(const KvConfig& kv);
};

SyntheticDataset gen_sbm_node_cls(const SbmSpec& spec);

/// Augment a link-prediction graph with features factorised from sampled
/// future links, giving a feature that leaks next-step structure.
struct FeatureShiftSpec {
  double p_bar = 0.4;
  double sigma = 0.2;
  int dim = 16;
  int max_iterations = 500;
  double learning_rate = 0.5;
  double l2 = 0.02;
  double init_scale = 0.1;
  double tolerance = 1e-4;
  std::uint64_t seed = 1;

  void check() const;
  double p_at(int t) const;  // clip(p_bar + sigma cos t, 0, 1)
  static FeatureShiftSpec from_kv(const KvConfig& kv);
};

struct FactorizationResult {
  Matrix factors;  // N x dim
  int iterations = 0;
  double loss = 0;
};

/// Gradient descent on the mean pairwise reconstruction cross-entropy of
/// sigmoid(X X^T) against `target` (off-diagonal), plus an l2 term.
/// Stops once both the relative loss change and the relative step fall below
/// the tolerance. Throws NumericalError (tagged with `context`) on divergence.
FactorizationResult factorize_links(const Eigen::MatrixXi& target, const FeatureShiftSpec& spec,
                                    std::uint64_t seed, const std::string& context);

/// Needs link labels or T >= 2 so that every t has a next step to sample.
SyntheticDataset gen_feature_shift(const DynamicGraph& base, const FeatureShiftSpec& spec);

enum class EnvMode { stationary, nonstationary };
enum class SinMode { literal, per_step };

/// Similarity-graph environment suites. Nodes belong to one of K hidden
/// variables (the environments). Edges connect the most cosine-similar pairs
/// of a per-snapshot latent until the mean degree target is met; an edge is
/// tagged K<k> when both endpoints share hidden variable k, else X.
///
/// stationary: latent = static node draw + jitter; observed features add the
/// low-noise perturbation for invariant hidden variables, high-noise otherwise.
/// nonstationary: features = (1 - gamma_dyn) static + gamma_dyn amp(t) dynamic,
/// and edges are built on the features themselves.
struct EnvSuiteSpec {
  EnvMode mode = EnvMode::stationary;
  int nodes = 300;
  int timestamps = 8;
  int hidden = 4;  // K
  int dim = 8;
  double gamma_inv = 0.5;
  double gamma_dyn = 0.0;
  double mu_sta = 0.0, sigma_sta = 1.0;  // hidden-variable means
  double mu_dyn = 0.0, sigma_dyn = 1.0;
  double node_spread = 0.5;  // per-node static offset around its hidden mean
  double jitter = 0.3;       // per-snapshot latent jitter (stationary)
  double low_noise = 0.1;    // invariant environments
  double high_noise = 2.0;
  double mean_degree = 8.0;
  SinMode sin_mode = SinMode::literal;
  int ood_hidden = 1;  // K_i withheld from train/val, 0 disables the rule
  int test_timestamps = 2;
  int val_timestamps = 1;
  std::uint64_t seed = 1;

  void check() const;
  /// Amplitude of the dynamic draw at t: sin(4T) literally, or sin(4t).
  double dyn_amplitude(int t) const;
  static EnvSuiteSpec from_kv(const KvConfig& kv, EnvMode mode);
};

SyntheticDataset gen_env_suite(const EnvSuiteSpec& spec);

/// Hidden variables (1-based) with the low-noise regime: the first
/// round(gamma_inv * K) entries of a seeded permutation of 1..K, so the sets
/// are nested across gamma_inv for a fixed seed.
std::vector<int> invariant_hidden(const EnvSuiteSpec& spec);

/// Top pairs (u < v) of a cosine-similarity matrix: floor(N * degree / 2) of them.
std::vector<Edge> top_similarity_edges(const Matrix& latent, double mean_degree);

/// Dispatch on the `generator` key: sbm | feature_shift | env_stationary | env_nonstationary.
/// feature_shift reads the base dataset from the `base` key.
SyntheticDataset generate_from_kv(const KvConfig& kv);

}  // namespace evogood
