#pragma once

// Environment sequential VAE: a static latent e_s and a dynamic latent
// sequence e_d^1..e_d^T inferred from node-pooled per-timestamp summaries of
// H, a recurrent prior over e_d, and a decoder that models the node vectors of
// each timestamp as a diagonal Gaussian.

#include <cstdint>
#include <random>
#include <vector>

#include "evogood/autodiff.hpp"
#include "evogood/encoder.hpp"
#include "evogood/graph.hpp"
#include "evogood/nn.hpp"

namespace evogood {

struct EsvaeConfig {
  int input_dim = 16;  // d'
  int static_dim = 16;
  int dynamic_dim = 16;
  int decoder_hidden = 32;
  int clusters = 10;
  int top_k = 3;
  int kmeans_restarts = 10;
  int samples = 1;  // reparameterised samples per term
  double margin = 1.0;
  double alpha1 = 0.1;
  double alpha2 = 0.1;
  double logvar_min = -8.0;
  double logvar_max = 8.0;
  /// false selects the shared, non-sequential VAE: one posterior per
  /// timestamp from that timestamp's summary, a standard normal prior, no
  /// static factor and no triplet or cluster terms.
  bool sequential = true;

  void check() const;
};

struct GaussianParams {
  RowVector mean;
  RowVector log_variance;
};

struct EnvPosterior {
  GaussianParams static_factor;
  std::vector<GaussianParams> dynamic;  // T entries
};

struct PseudoLabelTask {
  int clusters = 0;
  std::vector<int> assignment;       // node -> cluster, 0-based
  Matrix cluster_entropy;            // T x m, mean SE over cluster members
  std::vector<std::vector<int>> top;  // per timestamp, k cluster indices by rank
  Matrix targets;                    // T x m k-hot

  int timestamps() const { return static_cast<int>(top.size()); }
};

struct TaggedVector {
  RowVector value;
  int t = 1;
};

struct EsvaeParams {
  nn::LstmCell static_rnn;
  nn::LstmCell dynamic_rnn;
  nn::LstmCell prior_rnn;
  nn::Linear static_mu, static_lv;
  nn::Linear dynamic_mu, dynamic_lv;
  nn::Linear prior_mu, prior_lv;  // zero-initialised: the untrained prior is N(0, I)
  ad::Parameter prior_h0;
  nn::Linear dec_hidden, dec_mu, dec_lv;
  nn::Linear cluster_head;

  static EsvaeParams init(const EsvaeConfig& cfg, std::mt19937_64& rng);
  std::vector<ad::Parameter*> all();
};

/// Reparameterisation noise and triplet inputs, drawn once per epoch.
struct EsvaeNoise {
  Matrix eps_static;                // samples x k_s
  std::vector<Matrix> eps_dynamic;  // samples entries of T x k_d
  std::vector<int> time_permutation;
  Matrix negative_summaries;  // T x d'; empty selects the block-rotated anchor

  static EsvaeNoise draw(const EsvaeConfig& cfg, int timestamps, std::mt19937_64& rng);
  static EsvaeNoise zeros(const EsvaeConfig& cfg, int timestamps);
};

struct EsvaeTerms {
  ad::Var total;
  ad::Var svae;  // nll + kl_static + kl_dynamic
  ad::Var nll;
  ad::Var kl_static;
  ad::Var kl_dynamic;
  ad::Var l_s;
  ad::Var l_d;
  nn::GaussianVar static_posterior;
  std::vector<nn::GaussianVar> dynamic_posterior;
};

// Tape-level pieces.

ad::Var node_summaries(const std::vector<ad::Var>& h);  // T x d', mean over nodes per timestamp
nn::GaussianVar encode_static(ad::Tape& tape, const ad::Var& summaries, const EsvaeConfig& cfg, EsvaeParams& p);
std::vector<nn::GaussianVar> encode_dynamic(ad::Tape& tape, const ad::Var& summaries, const EsvaeConfig& cfg,
                                            EsvaeParams& p);
/// Prior for every timestamp given posterior samples; entry t uses e_d[0..t-2].
std::vector<nn::GaussianVar> prior_sequence(ad::Tape& tape, const std::vector<ad::Var>& e_d, const EsvaeConfig& cfg,
                                            EsvaeParams& p);
nn::GaussianVar decode(ad::Tape& tape, const ad::Var& e_s, const ad::Var& e_d, const EsvaeConfig& cfg,
                       EsvaeParams& p);
ad::Var reparameterize(const nn::GaussianVar& g, const Matrix& noise);
/// Mean over rows of x of the diagonal Gaussian negative log-likelihood summed over dims.
ad::Var gaussian_nll(const ad::Var& x, const ad::Var& mean, const ad::Var& logvar);
ad::Var triplet_loss(const ad::Var& anchor, const ad::Var& positive, const ad::Var& negative, double margin);
ad::Var dynamic_regularization(ad::Tape& tape, const ad::Var& e_d, const PseudoLabelTask& task, EsvaeParams& p);

EsvaeTerms esvae_forward(ad::Tape& tape, const std::vector<ad::Var>& h, const PseudoLabelTask& task,
                         const EsvaeNoise& noise, const EsvaeConfig& cfg, EsvaeParams& p);

// Value-level operations.

GaussianParams prior_dynamic(const Matrix& e_d_prefix, const EsvaeConfig& cfg, EsvaeParams& p);
GaussianParams encode_static(const NodeRepresentationSequence& h, const EsvaeConfig& cfg, EsvaeParams& p);
GaussianParams encode_dynamic(const NodeRepresentationSequence& h_prefix, const EsvaeConfig& cfg, EsvaeParams& p);
EnvPosterior infer_posterior(const NodeRepresentationSequence& h, const EsvaeConfig& cfg, EsvaeParams& p);
RowVector reparameterize(const GaussianParams& g, const RowVector& noise);
GaussianParams decode(const RowVector& e_s, const RowVector& e_d, const EsvaeConfig& cfg, EsvaeParams& p);
double kl_divergence(const GaussianParams& q, const GaussianParams& p);
double triplet_static_loss(const NodeRepresentationSequence& anchor, const NodeRepresentationSequence& positive,
                           const NodeRepresentationSequence& negative, double margin, const EsvaeConfig& cfg,
                           EsvaeParams& p);
double triplet_from_distances(double d_pos, double d_neg, double margin);

/// Per-node 1-order structural entropy contributions in bits; sums to H1(G).
/// Throws DomainError for a snapshot without edges.
Eigen::VectorXd structural_entropy(const Snapshot& snapshot);

PseudoLabelTask cluster_pseudo_labels(const DynamicGraph& g, const NodeRepresentationSequence& h, int m, int k,
                                      int restarts, std::uint64_t seed);
/// Pseudo labels from a fixed cluster assignment.
PseudoLabelTask pseudo_labels_from_assignment(const DynamicGraph& g, std::vector<int> assignment, int m, int k);

double dynamic_regularization_loss(const Matrix& e_d, const PseudoLabelTask& task, EsvaeParams& p);

struct EsvaeLossValue {
  double total = 0.0;
  double svae = 0.0;
  double l_s = 0.0;
  double l_d = 0.0;
};
EsvaeLossValue esvae_loss(double svae, double l_s, double l_d, double alpha1, double alpha2);

/// Draw `count` prior chains of length T, decode each step and sample one
/// node vector per chain and timestamp.
std::vector<TaggedVector> sample_generated_library(const EsvaeConfig& cfg, EsvaeParams& p, int timestamps, int count,
                                                   std::uint64_t seed);

}  // namespace evogood
