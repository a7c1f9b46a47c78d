#include "evogood/esvae.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "evogood/errors.hpp"
#include "evogood/kmeans.hpp"

namespace evogood {

void EsvaeConfig::check() const {
  if (input_dim <= 0 || static_dim <= 0 || dynamic_dim <= 0 || decoder_hidden <= 0)
    throw ConfigError("esvae dimensions must be positive");
  if (clusters < 1) throw ConfigError("esvae clusters must be >= 1");
  if (top_k < 1 || top_k > clusters) throw ConfigError("esvae top_k must lie in 1..clusters");
  if (samples < 1) throw ConfigError("esvae samples must be >= 1");
  if (alpha1 < 0 || alpha2 < 0) throw ConfigError("alpha1 and alpha2 must be non-negative");
  if (margin < 0) throw ConfigError("triplet margin must be non-negative");
}

EsvaeParams EsvaeParams::init(const EsvaeConfig& cfg, std::mt19937_64& rng) {
  cfg.check();
  const int d = cfg.input_dim, ks = cfg.static_dim, kd = cfg.dynamic_dim;
  EsvaeParams p;
  p.static_rnn = nn::LstmCell("esvae.static_rnn", d, ks, rng);
  p.dynamic_rnn = nn::LstmCell("esvae.dynamic_rnn", d, kd, rng);
  p.prior_rnn = nn::LstmCell("esvae.prior_rnn", kd, kd, rng);
  p.static_mu = nn::Linear("esvae.static_mu", ks, ks, rng);
  p.static_lv = nn::Linear("esvae.static_lv", ks, ks, rng);
  const int dyn_in = cfg.sequential ? kd : d;
  p.dynamic_mu = nn::Linear("esvae.dynamic_mu", dyn_in, kd, rng);
  p.dynamic_lv = nn::Linear("esvae.dynamic_lv", dyn_in, kd, rng);
  p.prior_mu = nn::Linear("esvae.prior_mu", kd, kd, rng, nn::Init::zeros);
  p.prior_lv = nn::Linear("esvae.prior_lv", kd, kd, rng, nn::Init::zeros);
  p.prior_h0 = ad::Parameter("esvae.prior_h0", Matrix::Zero(1, kd));
  p.dec_hidden = nn::Linear("esvae.dec_hidden", ks + kd, cfg.decoder_hidden, rng);
  p.dec_mu = nn::Linear("esvae.dec_mu", cfg.decoder_hidden, d, rng);
  p.dec_lv = nn::Linear("esvae.dec_lv", cfg.decoder_hidden, d, rng);
  p.cluster_head = nn::Linear("esvae.cluster_head", kd, cfg.clusters, rng);
  return p;
}

std::vector<ad::Parameter*> EsvaeParams::all() {
  std::vector<ad::Parameter*> out;
  static_rnn.collect(out);
  dynamic_rnn.collect(out);
  prior_rnn.collect(out);
  for (nn::Linear* l : {&static_mu, &static_lv, &dynamic_mu, &dynamic_lv, &prior_mu, &prior_lv})
    l->collect(out);
  out.push_back(&prior_h0);
  for (nn::Linear* l : {&dec_hidden, &dec_mu, &dec_lv, &cluster_head}) l->collect(out);
  return out;
}

EsvaeNoise EsvaeNoise::draw(const EsvaeConfig& cfg, int timestamps, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](int r, int c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
  };
  EsvaeNoise n;
  n.eps_static = fill(cfg.samples, cfg.static_dim);
  for (int s = 0; s < cfg.samples; ++s) n.eps_dynamic.push_back(fill(timestamps, cfg.dynamic_dim));
  n.time_permutation.resize(static_cast<std::size_t>(timestamps));
  std::iota(n.time_permutation.begin(), n.time_permutation.end(), 0);
  std::shuffle(n.time_permutation.begin(), n.time_permutation.end(), rng);
  return n;
}

EsvaeNoise EsvaeNoise::zeros(const EsvaeConfig& cfg, int timestamps) {
  EsvaeNoise n;
  n.eps_static = Matrix::Zero(cfg.samples, cfg.static_dim);
  for (int s = 0; s < cfg.samples; ++s) n.eps_dynamic.push_back(Matrix::Zero(timestamps, cfg.dynamic_dim));
  n.time_permutation.resize(static_cast<std::size_t>(timestamps));
  std::iota(n.time_permutation.begin(), n.time_permutation.end(), 0);
  return n;
}

namespace {

nn::GaussianVar head(ad::Tape& tape, nn::Linear& mu, nn::Linear& lv, const ad::Var& x, const EsvaeConfig& cfg) {
  return {mu(tape, x), ad::clamp(lv(tape, x), cfg.logvar_min, cfg.logvar_max)};
}

nn::LstmCell::State zero_state(ad::Tape& tape, int k) {
  return {tape.constant(Matrix::Zero(1, k)), tape.constant(Matrix::Zero(1, k))};
}

GaussianParams to_params(const nn::GaussianVar& g) {
  return {g.mean.value().row(0), g.logvar.value().row(0)};
}

ad::Var rotate_blocks(const ad::Var& s) {
  const auto d = s.cols();
  const auto half = d / 2;
  if (half == 0) return ad::scale(s, -1.0);
  ad::Var parts[] = {ad::slice_cols(s, half, d - half), ad::slice_cols(s, 0, half)};
  return ad::concat_cols(parts);
}

}  // namespace

ad::Var node_summaries(const std::vector<ad::Var>& h) {
  if (h.empty()) throw ContractViolation("node_summaries needs at least one timestamp");
  std::vector<ad::Var> rows;
  rows.reserve(h.size());
  for (const ad::Var& ht : h) rows.push_back(ad::mean_rows(ht));
  return ad::concat_rows(rows);
}

nn::GaussianVar encode_static(ad::Tape& tape, const ad::Var& summaries, const EsvaeConfig& cfg, EsvaeParams& p) {
  auto state = zero_state(tape, cfg.static_dim);
  for (Eigen::Index t = 0; t < summaries.rows(); ++t) state = p.static_rnn.step(tape, ad::slice_rows(summaries, t, 1), state);
  return head(tape, p.static_mu, p.static_lv, state.h, cfg);
}

std::vector<nn::GaussianVar> encode_dynamic(ad::Tape& tape, const ad::Var& summaries, const EsvaeConfig& cfg,
                                            EsvaeParams& p) {
  if (summaries.rows() == 0) throw ContractViolation("encode_dynamic needs a nonempty prefix");
  std::vector<nn::GaussianVar> out;
  if (!cfg.sequential) {
    nn::GaussianVar all = head(tape, p.dynamic_mu, p.dynamic_lv, summaries, cfg);
    for (Eigen::Index t = 0; t < summaries.rows(); ++t)
      out.push_back({ad::slice_rows(all.mean, t, 1), ad::slice_rows(all.logvar, t, 1)});
    return out;
  }
  auto state = zero_state(tape, cfg.dynamic_dim);
  for (Eigen::Index t = 0; t < summaries.rows(); ++t) {
    state = p.dynamic_rnn.step(tape, ad::slice_rows(summaries, t, 1), state);
    out.push_back(head(tape, p.dynamic_mu, p.dynamic_lv, state.h, cfg));
  }
  return out;
}

std::vector<nn::GaussianVar> prior_sequence(ad::Tape& tape, const std::vector<ad::Var>& e_d, const EsvaeConfig& cfg,
                                            EsvaeParams& p) {
  std::vector<nn::GaussianVar> out;
  if (e_d.empty()) return out;
  nn::LstmCell::State state{tape.param(p.prior_h0), tape.constant(Matrix::Zero(1, cfg.dynamic_dim))};
  out.push_back(head(tape, p.prior_mu, p.prior_lv, state.h, cfg));
  for (std::size_t t = 1; t < e_d.size(); ++t) {
    state = p.prior_rnn.step(tape, e_d[t - 1], state);
    out.push_back(head(tape, p.prior_mu, p.prior_lv, state.h, cfg));
  }
  return out;
}

nn::GaussianVar decode(ad::Tape& tape, const ad::Var& e_s, const ad::Var& e_d, const EsvaeConfig& cfg,
                       EsvaeParams& p) {
  ad::Var es = e_s;
  if (e_s.rows() != e_d.rows()) {
    std::vector<int> rep(static_cast<std::size_t>(e_d.rows()), 0);
    es = ad::gather_rows(e_s, rep);
  }
  ad::Var parts[] = {es, e_d};
  ad::Var hidden = ad::relu(p.dec_hidden(tape, ad::concat_cols(parts)));
  return head(tape, p.dec_mu, p.dec_lv, hidden, cfg);
}

ad::Var reparameterize(const nn::GaussianVar& g, const Matrix& noise) {
  if (noise.rows() != g.mean.rows() || noise.cols() != g.mean.cols())
    throw ContractViolation("reparameterize: noise shape mismatch");
  ad::Var sigma = ad::exp(ad::scale(g.logvar, 0.5));
  return ad::add(g.mean, ad::mul_const(sigma, noise));
}

ad::Var gaussian_nll(const ad::Var& x, const ad::Var& mean, const ad::Var& logvar) {
  // mean_v 0.5 * sum_j (lv_j + log 2pi + (x_vj - mu_j)^2 exp(-lv_j))
  ad::Var diff2 = ad::mean_rows(ad::square(ad::add_row(x, ad::scale(mean, -1.0))));
  ad::Var quad = ad::mul(diff2, ad::exp(ad::scale(logvar, -1.0)));
  const double log2pi = std::log(2.0 * std::numbers::pi);
  return ad::scale(ad::add_scalar(ad::sum(ad::add(quad, logvar)), log2pi * static_cast<double>(x.cols())), 0.5);
}

ad::Var triplet_loss(const ad::Var& anchor, const ad::Var& positive, const ad::Var& negative, double margin) {
  ad::Var d_pos = ad::sqrt(ad::sum(ad::square(ad::sub(anchor, positive))), 1e-12);
  ad::Var d_neg = ad::sqrt(ad::sum(ad::square(ad::sub(anchor, negative))), 1e-12);
  return ad::relu(ad::add_scalar(ad::sub(d_pos, d_neg), margin));
}

ad::Var dynamic_regularization(ad::Tape& tape, const ad::Var& e_d, const PseudoLabelTask& task, EsvaeParams& p) {
  if (task.timestamps() != e_d.rows()) throw ContractViolation("pseudo-label task does not cover every timestamp");
  ad::Var logits = p.cluster_head(tape, e_d);
  return ad::scale(ad::bce_with_logits(logits, task.targets), static_cast<double>(e_d.rows()));
}

EsvaeTerms esvae_forward(ad::Tape& tape, const std::vector<ad::Var>& h, const PseudoLabelTask& task,
                         const EsvaeNoise& noise, const EsvaeConfig& cfg, EsvaeParams& p) {
  const int T = static_cast<int>(h.size());
  ad::Var s = node_summaries(h);
  EsvaeTerms out;
  out.dynamic_posterior = encode_dynamic(tape, s, cfg, p);
  const double inv_samples = 1.0 / static_cast<double>(cfg.samples);

  std::vector<ad::Var> nll_terms, kld_terms, ld_terms;
  if (cfg.sequential) {
    out.static_posterior = encode_static(tape, s, cfg, p);
    out.kl_static = nn::kl_standard(out.static_posterior);
  } else {
    out.kl_static = tape.constant(Matrix::Zero(1, 1));
  }

  for (int k = 0; k < cfg.samples; ++k) {
    ad::Var e_s = cfg.sequential ? reparameterize(out.static_posterior, noise.eps_static.row(k))
                                 : tape.constant(Matrix::Zero(1, cfg.static_dim));
    std::vector<ad::Var> e_d;
    const Matrix& eps = noise.eps_dynamic.at(static_cast<std::size_t>(k));
    for (int t = 0; t < T; ++t)
      e_d.push_back(reparameterize(out.dynamic_posterior[static_cast<std::size_t>(t)], eps.row(t)));
    ad::Var e_d_all = ad::concat_rows(e_d);

    nn::GaussianVar gen = decode(tape, e_s, e_d_all, cfg, p);
    for (int t = 0; t < T; ++t)
      nll_terms.push_back(ad::scale(gaussian_nll(h[static_cast<std::size_t>(t)], ad::slice_rows(gen.mean, t, 1),
                                                 ad::slice_rows(gen.logvar, t, 1)),
                                    inv_samples));

    if (cfg.sequential) {
      auto priors = prior_sequence(tape, e_d, cfg, p);
      for (int t = 0; t < T; ++t)
        kld_terms.push_back(ad::scale(nn::kl_diag(out.dynamic_posterior[static_cast<std::size_t>(t)],
                                                  priors[static_cast<std::size_t>(t)]),
                                      inv_samples));
      ld_terms.push_back(ad::scale(dynamic_regularization(tape, e_d_all, task, p), inv_samples));
    }
  }
  if (!cfg.sequential)
    for (const auto& q : out.dynamic_posterior) kld_terms.push_back(nn::kl_standard(q));

  out.nll = ad::add_all(nll_terms);
  out.kl_dynamic = ad::add_all(kld_terms);
  out.svae = ad::add(ad::add(out.nll, out.kl_static), out.kl_dynamic);

  if (cfg.sequential) {
    ad::Var positive = ad::gather_rows(s, noise.time_permutation);
    ad::Var negative = noise.negative_summaries.size() > 0 ? tape.constant(noise.negative_summaries) : rotate_blocks(s);
    nn::GaussianVar pos = encode_static(tape, positive, cfg, p);
    nn::GaussianVar neg = encode_static(tape, negative, cfg, p);
    out.l_s = triplet_loss(out.static_posterior.mean, pos.mean, neg.mean, cfg.margin);
    out.l_d = ad::add_all(ld_terms);
    out.total = ad::add(out.svae, ad::add(ad::scale(out.l_s, cfg.alpha1), ad::scale(out.l_d, cfg.alpha2)));
  } else {
    out.l_s = tape.constant(Matrix::Zero(1, 1));
    out.l_d = tape.constant(Matrix::Zero(1, 1));
    out.total = out.svae;
  }
  return out;
}

// Value-level wrappers evaluate the same graph on a tape without gradients.

namespace {

std::vector<ad::Var> constants(ad::Tape& tape, const NodeRepresentationSequence& h) {
  std::vector<ad::Var> out;
  for (const Matrix& m : h.values) out.push_back(tape.constant(m));
  return out;
}

}  // namespace

GaussianParams prior_dynamic(const Matrix& e_d_prefix, const EsvaeConfig& cfg, EsvaeParams& p) {
  ad::Tape tape(false);
  std::vector<ad::Var> rows;
  for (Eigen::Index t = 0; t < e_d_prefix.rows(); ++t) rows.push_back(tape.constant(e_d_prefix.row(t)));
  rows.push_back(tape.constant(Matrix::Zero(1, cfg.dynamic_dim)));  // placeholder for the queried step
  return to_params(prior_sequence(tape, rows, cfg, p).back());
}

GaussianParams encode_static(const NodeRepresentationSequence& h, const EsvaeConfig& cfg, EsvaeParams& p) {
  ad::Tape tape(false);
  return to_params(encode_static(tape, node_summaries(constants(tape, h)), cfg, p));
}

GaussianParams encode_dynamic(const NodeRepresentationSequence& h_prefix, const EsvaeConfig& cfg, EsvaeParams& p) {
  if (h_prefix.timestamps() == 0) throw ContractViolation("encode_dynamic needs a nonempty prefix");
  ad::Tape tape(false);
  return to_params(encode_dynamic(tape, node_summaries(constants(tape, h_prefix)), cfg, p).back());
}

EnvPosterior infer_posterior(const NodeRepresentationSequence& h, const EsvaeConfig& cfg, EsvaeParams& p) {
  ad::Tape tape(false);
  ad::Var s = node_summaries(constants(tape, h));
  EnvPosterior post;
  if (cfg.sequential) post.static_factor = to_params(encode_static(tape, s, cfg, p));
  else post.static_factor = {RowVector::Zero(cfg.static_dim), RowVector::Zero(cfg.static_dim)};
  for (const auto& g : encode_dynamic(tape, s, cfg, p)) post.dynamic.push_back(to_params(g));
  return post;
}

RowVector reparameterize(const GaussianParams& g, const RowVector& noise) {
  if (noise.size() != g.mean.size()) throw ContractViolation("reparameterize: noise dimension mismatch");
  return g.mean.array() + (0.5 * g.log_variance.array()).exp() * noise.array();
}

GaussianParams decode(const RowVector& e_s, const RowVector& e_d, const EsvaeConfig& cfg, EsvaeParams& p) {
  if (e_s.size() != cfg.static_dim || e_d.size() != cfg.dynamic_dim)
    throw ContractViolation("decode: latent dimensions do not match the decoder");
  ad::Tape tape(false);
  return to_params(decode(tape, tape.constant(e_s), tape.constant(e_d), cfg, p));
}

double kl_divergence(const GaussianParams& q, const GaussianParams& p) {
  return nn::kl_diag(q.mean, q.log_variance, p.mean, p.log_variance);
}

double triplet_from_distances(double d_pos, double d_neg, double margin) {
  return std::max(d_pos - d_neg + margin, 0.0);
}

double triplet_static_loss(const NodeRepresentationSequence& anchor, const NodeRepresentationSequence& positive,
                           const NodeRepresentationSequence& negative, double margin, const EsvaeConfig& cfg,
                           EsvaeParams& p) {
  const RowVector a = encode_static(anchor, cfg, p).mean;
  const RowVector pos = encode_static(positive, cfg, p).mean;
  const RowVector neg = encode_static(negative, cfg, p).mean;
  return triplet_from_distances((a - pos).norm(), (a - neg).norm(), margin);
}

Eigen::VectorXd structural_entropy(const Snapshot& snapshot) {
  const int n = snapshot.node_count();
  const double vol = static_cast<double>(snapshot.indices().size());
  if (vol == 0.0) throw DomainError("structural entropy is undefined for a snapshot without edges");
  Eigen::VectorXd se(n);
  for (int v = 0; v < n; ++v) {
    const double d = static_cast<double>(snapshot.neighbors(v).size());
    se(v) = d > 0 ? -(d / vol) * std::log2(d / vol) : 0.0;
  }
  return se;
}

PseudoLabelTask pseudo_labels_from_assignment(const DynamicGraph& g, std::vector<int> assignment, int m, int k) {
  if (static_cast<int>(assignment.size()) != g.node_count) throw ContractViolation("assignment size mismatch");
  if (k < 1 || k > m) throw ConfigError("top_k must lie in 1..clusters");
  const int T = g.num_timestamps();
  PseudoLabelTask task;
  task.clusters = m;
  task.cluster_entropy = Matrix::Zero(T, m);
  task.targets = Matrix::Zero(T, m);
  std::vector<int> size(static_cast<std::size_t>(m), 0);
  for (int c : assignment) {
    if (c < 0 || c >= m) throw ContractViolation("cluster id out of range");
    ++size[static_cast<std::size_t>(c)];
  }
  for (int t = 1; t <= T; ++t) {
    // A snapshot without edges carries no structural uncertainty; treat it as zero.
    const Snapshot& s = g.at(t);
    Eigen::VectorXd se = s.indices().empty() ? Eigen::VectorXd::Zero(g.node_count) : structural_entropy(s);
    for (int v = 0; v < g.node_count; ++v) task.cluster_entropy(t - 1, assignment[static_cast<std::size_t>(v)]) += se(v);
    for (int c = 0; c < m; ++c)
      if (size[static_cast<std::size_t>(c)] > 0) task.cluster_entropy(t - 1, c) /= size[static_cast<std::size_t>(c)];
    std::vector<int> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return task.cluster_entropy(t - 1, a) > task.cluster_entropy(t - 1, b); });
    order.resize(static_cast<std::size_t>(k));
    for (int c : order) task.targets(t - 1, c) = 1.0;
    task.top.push_back(std::move(order));
  }
  task.assignment = std::move(assignment);
  return task;
}

PseudoLabelTask cluster_pseudo_labels(const DynamicGraph& g, const NodeRepresentationSequence& h, int m, int k,
                                      int restarts, std::uint64_t seed) {
  if (g.node_count < m)
    throw ConfigError("cluster_pseudo_labels needs N >= m (N=" + std::to_string(g.node_count) +
                      ", m=" + std::to_string(m) + ")");
  if (h.timestamps() == 0) throw ContractViolation("cluster_pseudo_labels needs representations");
  Matrix avg = Matrix::Zero(h.node_count(), h.dim());
  for (const Matrix& m_t : h.values) avg += m_t;
  avg /= static_cast<double>(h.timestamps());
  KMeansResult km = kmeans(avg, m, restarts, seed);
  return pseudo_labels_from_assignment(g, std::move(km.assignment), m, k);
}

double dynamic_regularization_loss(const Matrix& e_d, const PseudoLabelTask& task, EsvaeParams& p) {
  ad::Tape tape(false);
  return dynamic_regularization(tape, tape.constant(e_d), task, p).scalar();
}

EsvaeLossValue esvae_loss(double svae, double l_s, double l_d, double alpha1, double alpha2) {
  if (alpha1 < 0 || alpha2 < 0) throw ConfigError("alpha1 and alpha2 must be non-negative");
  return {svae + alpha1 * l_s + alpha2 * l_d, svae, l_s, l_d};
}

std::vector<TaggedVector> sample_generated_library(const EsvaeConfig& cfg, EsvaeParams& p, int timestamps, int count,
                                                   std::uint64_t seed) {
  std::vector<TaggedVector> out;
  if (count <= 0 || timestamps <= 0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto noise = [&](int r, int c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
  };
  auto clamp_lv = [&](Matrix m) { return Matrix(m.cwiseMax(cfg.logvar_min).cwiseMin(cfg.logvar_max)); };

  const Matrix e_s = cfg.sequential ? noise(count, cfg.static_dim) : Matrix(Matrix::Zero(count, cfg.static_dim));
  nn::LstmCell::Value state{p.prior_h0.value.replicate(count, 1), Matrix::Zero(count, cfg.dynamic_dim)};
  std::vector<Matrix> per_t;
  for (int t = 1; t <= timestamps; ++t) {
    Matrix e_d;
    if (cfg.sequential) {
      // state has consumed e_d^1..e_d^{t-1}
      Matrix mu = p.prior_mu.apply(state.h);
      Matrix lv = clamp_lv(p.prior_lv.apply(state.h));
      e_d = mu + Matrix((0.5 * lv.array()).exp() * noise(count, cfg.dynamic_dim).array());
      state = p.prior_rnn.step(e_d, state);
    } else {
      e_d = noise(count, cfg.dynamic_dim);
    }
    Matrix z(count, cfg.static_dim + cfg.dynamic_dim);
    z << e_s, e_d;
    Matrix hidden = p.dec_hidden.apply(z).cwiseMax(0.0);
    Matrix mu = p.dec_mu.apply(hidden);
    Matrix lv = clamp_lv(p.dec_lv.apply(hidden));
    Matrix h = mu + Matrix((0.5 * lv.array()).exp() * noise(count, cfg.input_dim).array());
    per_t.push_back(std::move(h));
  }
  out.reserve(static_cast<std::size_t>(count * timestamps));
  for (int t = 1; t <= timestamps; ++t)
    for (int i = 0; i < count; ++i) out.push_back({per_t[static_cast<std::size_t>(t - 1)].row(i), t});
  return out;
}

}  // namespace evogood
