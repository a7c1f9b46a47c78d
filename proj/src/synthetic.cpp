#include "evogood/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "evogood/errors.hpp"
#include "evogood/kernels.hpp"
#include "evogood/seed.hpp"

namespace evogood {

namespace {

void reject_unknown(const KvConfig& kv, std::set<std::string> known) {
  known.insert("generator");
  const auto unknown = kv.unknown_keys(known);
  if (!unknown.empty()) throw ConfigError("unknown spec key `" + *unknown.begin() + "`");
}

bool in_unit(double p) { return p >= 0.0 && p <= 1.0; }

/// Last `test` prediction timestamps are test, the `val` before them validation.
KvConfig split_config(int P, int val, int test) {
  if (test < 1 || val < 0 || val + test >= P)
    throw ConfigError("split leaves no training timestamps (P=" + std::to_string(P) + ")");
  const int train_last = P - val - test;
  KvConfig kv;
  kv.set("train_range", "1-" + std::to_string(train_last));
  kv.set("val_range", val ? std::to_string(train_last + 1) + "-" + std::to_string(train_last + val) : "none");
  kv.set("test_range", std::to_string(P - test + 1) + "-" + std::to_string(P));
  return kv;
}

Matrix gaussian(int rows, int cols, double mean, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> n(mean, sd);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

std::string block_tag(const char* part, int a, int b) {
  if (a > b) std::swap(a, b);
  return std::string(part) + ".B" + std::to_string(a + 1) + "-" + std::to_string(b + 1);
}

}  // namespace

// ---- SBM node classification ---------------------------------------------------

void SbmSpec::check() const {
  if (nodes < blocks || blocks < 2) throw ConfigError("sbm needs at least 2 blocks and one node per block");
  if (timestamps < 3) throw ConfigError("sbm needs at least 3 timestamps");
  if (!in_unit(p_intra) || !in_unit(p_inter)) throw ConfigError("sbm probabilities must lie in [0, 1]");
  if (!in_unit(shift_level)) throw ConfigError("shift_level must lie in [0, 1]");
  if (inv_noise < 0 || var_noise < 0 || noise_dims < 0) throw ConfigError("sbm noise settings must be non-negative");
  if (var_weight < 0) throw ConfigError("var_weight must be non-negative");
}

double SbmSpec::shift_at(int t) const { return t > timestamps - test_timestamps ? 0.0 : shift_level; }

SbmSpec SbmSpec::from_kv(const KvConfig& kv) {
  reject_unknown(kv, {"nodes", "timestamps", "blocks", "p_intra", "p_inter", "shift_level", "test_timestamps",
                      "val_timestamps", "inv_signal", "inv_noise", "var_signal", "var_noise", "var_weight", "noise_dims", "seed"});
  SbmSpec s;
  s.nodes = kv.get_int("nodes", s.nodes);
  s.timestamps = kv.get_int("timestamps", s.timestamps);
  s.blocks = kv.get_int("blocks", s.blocks);
  s.p_intra = kv.get_double("p_intra", s.p_intra);
  s.p_inter = kv.get_double("p_inter", s.p_inter);
  s.shift_level = kv.get_double("shift_level", s.shift_level);
  s.test_timestamps = kv.get_int("test_timestamps", s.test_timestamps);
  s.val_timestamps = kv.get_int("val_timestamps", s.val_timestamps);
  s.inv_signal = kv.get_double("inv_signal", s.inv_signal);
  s.inv_noise = kv.get_double("inv_noise", s.inv_noise);
  s.var_signal = kv.get_double("var_signal", s.var_signal);
  s.var_noise = kv.get_double("var_noise", s.var_noise);
  s.var_weight = kv.get_double("var_weight", s.var_weight);
  s.noise_dims = kv.get_int("noise_dims", s.noise_dims);
  s.seed = kv.get_u64("seed", s.seed);
  return s;
}

SyntheticDataset gen_sbm_node_cls(const SbmSpec& spec) {
  spec.check();
  const int N = spec.nodes, C = spec.blocks;
  SyntheticDataset out;
  out.split = split_config(spec.timestamps, spec.val_timestamps, spec.test_timestamps);
  DynamicGraph& g = out.graph;
  g.node_count = N;
  g.feature_dim = 2 * C + spec.noise_dims;
  g.labels.kind = LabelKind::node_class;
  g.labels.num_classes = C;

  std::vector<int> y(static_cast<std::size_t>(N));
  for (int v = 0; v < N; ++v) y[static_cast<std::size_t>(v)] = v % C;

  for (int t = 1; t <= spec.timestamps; ++t) {
    std::mt19937_64 rng(derive_seed(spec.seed, 0x5b, static_cast<std::uint64_t>(t)));
    const double s = spec.shift_at(t);
    std::bernoulli_distribution follow(s);
    std::uniform_int_distribution<int> any(0, C - 1);
    std::vector<int> z(static_cast<std::size_t>(N));
    for (int v = 0; v < N; ++v) {
      const bool f = follow(rng);
      const int r = any(rng);
      z[static_cast<std::size_t>(v)] = f ? y[static_cast<std::size_t>(v)] : r;
    }

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Edge> edges;
    for (int u = 0; u < N; ++u) {
      for (int v = u + 1; v < N; ++v) {
        const int yu = y[static_cast<std::size_t>(u)], yv = y[static_cast<std::size_t>(v)];
        const double pc = yu == yv ? spec.p_intra : spec.p_inter;
        const double pv = spec.var_weight * (z[static_cast<std::size_t>(u)] == z[static_cast<std::size_t>(v)] ? spec.p_intra
                                                                                             : spec.p_inter);
        double p = pc + pv;
        if (p > 1.0) {
          ++out.warnings;
          p = 1.0;
        }
        const double r = unit(rng);
        if (r >= p) continue;
        edges.push_back({u, v});
        out.provenance.edges.push_back({t, u, v, block_tag(r < pc ? "inv" : "var", yu, yv)});
      }
    }

    Matrix x(N, g.feature_dim);
    x.leftCols(C) = gaussian(N, C, 0.0, spec.inv_noise, rng);
    x.middleCols(C, C) = gaussian(N, C, 0.0, spec.var_noise, rng);
    if (spec.noise_dims) x.rightCols(spec.noise_dims) = gaussian(N, spec.noise_dims, 0.0, 1.0, rng);
    for (int v = 0; v < N; ++v) {
      x(v, y[static_cast<std::size_t>(v)]) += spec.inv_signal;
      x(v, C + z[static_cast<std::size_t>(v)]) += spec.var_signal;
    }
    g.snapshots.emplace_back(t, N, edges, std::move(x));
    for (int v = 0; v < N; ++v) g.labels.classes.push_back({v, t, y[static_cast<std::size_t>(v)] + 1});
  }
  std::sort(g.labels.classes.begin(), g.labels.classes.end(),
            [](const ClassLabel& a, const ClassLabel& b) { return std::tie(a.t, a.v) < std::tie(b.t, b.v); });
  return out;
}

// ---- feature shift -------------------------------------------------------------

void FeatureShiftSpec::check() const {
  if (!in_unit(p_bar)) throw ConfigError("p_bar must lie in [0, 1]");
  if (sigma < 0) throw ConfigError("sigma must be non-negative");
  if (dim < 1 || max_iterations < 1) throw ConfigError("factorization dim and iteration cap must be positive");
  if (learning_rate <= 0 || l2 < 0 || init_scale <= 0) throw ConfigError("invalid factorization optimiser settings");
}

double FeatureShiftSpec::p_at(int t) const { return std::clamp(p_bar + sigma * std::cos(t), 0.0, 1.0); }

FeatureShiftSpec FeatureShiftSpec::from_kv(const KvConfig& kv) {
  reject_unknown(kv, {"base", "p_bar", "sigma", "dim", "max_iterations", "learning_rate", "l2", "init_scale",
                      "tolerance", "seed"});
  FeatureShiftSpec s;
  s.p_bar = kv.get_double("p_bar", s.p_bar);
  s.sigma = kv.get_double("sigma", s.sigma);
  s.dim = kv.get_int("dim", s.dim);
  s.max_iterations = kv.get_int("max_iterations", s.max_iterations);
  s.learning_rate = kv.get_double("learning_rate", s.learning_rate);
  s.l2 = kv.get_double("l2", s.l2);
  s.init_scale = kv.get_double("init_scale", s.init_scale);
  s.tolerance = kv.get_double("tolerance", s.tolerance);
  s.seed = kv.get_u64("seed", s.seed);
  return s;
}

FactorizationResult factorize_links(const Eigen::MatrixXi& target, const FeatureShiftSpec& spec, std::uint64_t seed,
                                    const std::string& context) {
  const auto N = target.rows();
  std::mt19937_64 rng(seed);
  FactorizationResult res;
  res.factors = gaussian(static_cast<int>(N), spec.dim, 0.0, spec.init_scale, rng);
  Matrix& x = res.factors;
  const Matrix a = target.cast<double>();
  const double inv_n = 1.0 / static_cast<double>(std::max<Eigen::Index>(N, 1));

  auto loss_and_residual = [&](Matrix& resid) {
    const Matrix z = x * x.transpose();
    double loss = 0;
    resid.resize(N, N);
    for (Eigen::Index j = 0; j < N; ++j) {
      for (Eigen::Index i = 0; i < N; ++i) {
        if (i == j) {
          resid(i, j) = 0;
          continue;
        }
        const double zij = z(i, j);
        const double sp = zij > 0 ? zij + std::log1p(std::exp(-zij)) : std::log1p(std::exp(zij));
        loss += sp - a(i, j) * zij;
        resid(i, j) = (1.0 / (1.0 + std::exp(-zij)) - a(i, j)) * inv_n;
      }
    }
    return loss * inv_n + 0.5 * spec.l2 * x.squaredNorm();
  };

  Matrix resid;
  double loss = loss_and_residual(resid);
  for (int it = 1; it <= spec.max_iterations; ++it) {
    const Matrix grad = 2.0 * resid * x + spec.l2 * x;
    const Matrix step = spec.learning_rate * grad;
    x -= step;
    const double next = loss_and_residual(resid);
    if (!std::isfinite(next)) throw NumericalError("feature factorization diverged at " + context);
    res.iterations = it;
    const double rel_loss = std::abs(loss - next) / std::max(std::abs(loss), 1e-12);
    const double rel_step = step.norm() / std::max(x.norm(), 1e-12);
    loss = next;
    if (rel_loss < spec.tolerance && rel_step < spec.tolerance) break;
  }
  res.loss = loss;
  return res;
}

SyntheticDataset gen_feature_shift(const DynamicGraph& base_in, const FeatureShiftSpec& spec) {
  spec.check();
  DynamicGraph base = base_in;
  if (base.labels.links.empty()) {
    // No future labels: the last snapshot becomes the T+1 link labels.
    if (base.num_timestamps() < 2) throw ConfigError("feature shift needs T >= 2 snapshots or link labels");
    for (const Edge& e : base.snapshots.back().edges()) base.labels.links.push_back({e.u, e.v, base.num_timestamps()});
    base.snapshots.pop_back();
    base.labels.kind = LabelKind::link_occurrence;
  }
  if (base.labels.kind == LabelKind::node_class) throw ConfigError("feature shift expects a link-prediction graph");
  const int T = base.num_timestamps(), N = base.node_count;

  SyntheticDataset out;
  out.graph = base;
  out.graph.feature_dim = base.feature_dim + spec.dim;
  std::vector<std::vector<Edge>> sampled(static_cast<std::size_t>(T + 2));
  for (int t = 1; t <= T; ++t) {
    std::mt19937_64 rng(derive_seed(spec.seed, 0xf5, static_cast<std::uint64_t>(t)));
    std::bernoulli_distribution keep(spec.p_at(t));
    Eigen::MatrixXi target = Eigen::MatrixXi::Zero(N, N);
    for (const Edge& e : base.edges_at(t + 1)) {
      if (!keep(rng)) continue;
      target(e.u, e.v) = target(e.v, e.u) = 1;
      sampled[static_cast<std::size_t>(t + 1)].push_back(e);
    }
    const auto fit = factorize_links(target, spec, derive_seed(spec.seed, 0xfa, static_cast<std::uint64_t>(t)),
                                     "t=" + std::to_string(t));
    const Snapshot& s = base.at(t);
    Matrix x(N, out.graph.feature_dim);
    x << s.features(), fit.factors;
    out.graph.snapshots[static_cast<std::size_t>(t - 1)] = Snapshot(t, N, s.edges(), std::move(x));
  }
  for (int t = 1; t <= T + 1; ++t) {
    const auto& chosen = sampled[static_cast<std::size_t>(t)];
    for (const Edge& e : base.edges_at(t)) {
      const bool was_sampled = std::binary_search(chosen.begin(), chosen.end(), e);
      out.provenance.edges.push_back({t, e.u, e.v, was_sampled ? "sampled" : "base"});
    }
  }
  std::sort(out.provenance.edges.begin(), out.provenance.edges.end());
  out.split = split_config(T, std::max(1, T / 8), std::max(1, T / 4));
  return out;
}

// ---- environment suites ----------------------------------------------------------

void EnvSuiteSpec::check() const {
  if (hidden < 1) throw ConfigError("env suite needs K >= 1 hidden variables");
  if (nodes < 2 || timestamps < 3 || dim < 1) throw ConfigError("env suite needs N >= 2, T >= 3, dim >= 1");
  if (!in_unit(gamma_inv) || !in_unit(gamma_dyn)) throw ConfigError("gamma values must lie in [0, 1]");
  if (ood_hidden < 0 || ood_hidden > hidden) throw ConfigError("ood_hidden must be 0 or a hidden variable id");
  if (mean_degree <= 0) throw ConfigError("mean_degree must be positive");
}

double EnvSuiteSpec::dyn_amplitude(int t) const {
  return sin_mode == SinMode::literal ? std::sin(4.0 * timestamps) : std::sin(4.0 * t);
}

EnvSuiteSpec EnvSuiteSpec::from_kv(const KvConfig& kv, EnvMode mode) {
  reject_unknown(kv, {"nodes", "timestamps", "hidden", "dim", "gamma_inv", "gamma_dyn", "mu_sta", "sigma_sta",
                      "mu_dyn", "sigma_dyn", "node_spread", "jitter", "low_noise", "high_noise", "mean_degree",
                      "sin_mode", "ood_hidden", "test_timestamps", "val_timestamps", "seed"});
  EnvSuiteSpec s;
  s.mode = mode;
  if (mode == EnvMode::nonstationary) s.ood_hidden = 0;
  s.nodes = kv.get_int("nodes", s.nodes);
  s.timestamps = kv.get_int("timestamps", s.timestamps);
  s.hidden = kv.get_int("hidden", s.hidden);
  s.dim = kv.get_int("dim", s.dim);
  s.gamma_inv = kv.get_double("gamma_inv", s.gamma_inv);
  s.gamma_dyn = kv.get_double("gamma_dyn", s.gamma_dyn);
  s.mu_sta = kv.get_double("mu_sta", s.mu_sta);
  s.sigma_sta = kv.get_double("sigma_sta", s.sigma_sta);
  s.mu_dyn = kv.get_double("mu_dyn", s.mu_dyn);
  s.sigma_dyn = kv.get_double("sigma_dyn", s.sigma_dyn);
  s.node_spread = kv.get_double("node_spread", s.node_spread);
  s.jitter = kv.get_double("jitter", s.jitter);
  s.low_noise = kv.get_double("low_noise", s.low_noise);
  s.high_noise = kv.get_double("high_noise", s.high_noise);
  s.mean_degree = kv.get_double("mean_degree", s.mean_degree);
  const std::string sm = kv.get("sin_mode", "literal");
  if (sm != "literal" && sm != "per_step") throw ConfigError("sin_mode must be literal or per_step");
  s.sin_mode = sm == "literal" ? SinMode::literal : SinMode::per_step;
  s.ood_hidden = kv.get_int("ood_hidden", s.ood_hidden);
  s.test_timestamps = kv.get_int("test_timestamps", s.test_timestamps);
  s.val_timestamps = kv.get_int("val_timestamps", s.val_timestamps);
  s.seed = kv.get_u64("seed", s.seed);
  return s;
}

std::vector<int> invariant_hidden(const EnvSuiteSpec& spec) {
  std::vector<int> ids(static_cast<std::size_t>(spec.hidden));
  std::iota(ids.begin(), ids.end(), 1);
  std::mt19937_64 rng(derive_seed(spec.seed, 0x1a));
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto keep = static_cast<std::size_t>(std::lround(spec.gamma_inv * spec.hidden));
  ids.resize(keep);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<Edge> top_similarity_edges(const Matrix& latent, double mean_degree) {
  const auto N = static_cast<long>(latent.rows());
  const auto want = static_cast<std::size_t>(std::floor(static_cast<double>(N) * mean_degree / 2.0));
  const auto pairs = static_cast<std::size_t>(N * (N - 1) / 2);
  if (want == 0) throw ConfigError("similarity threshold keeps no edges; raise mean_degree");
  if (want > pairs) throw ConfigError("mean_degree exceeds the complete graph");
  const Matrix sim = kernels::parallel::pairwise_cosine(latent);
  struct Cand {
    double s;
    int u, v;
  };
  std::vector<Cand> all;
  all.reserve(pairs);
  for (int u = 0; u < N; ++u)
    for (int v = u + 1; v < N; ++v) all.push_back({sim(u, v), u, v});
  auto better = [](const Cand& a, const Cand& b) {
    if (a.s != b.s) return a.s > b.s;
    return std::tie(a.u, a.v) < std::tie(b.u, b.v);
  };
  std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(want - 1), all.end(), better);
  std::vector<Edge> edges;
  edges.reserve(want);
  for (std::size_t i = 0; i < want; ++i) edges.push_back({all[i].u, all[i].v});
  std::sort(edges.begin(), edges.end());
  return edges;
}

SyntheticDataset gen_env_suite(const EnvSuiteSpec& spec) {
  spec.check();
  const int N = spec.nodes, T = spec.timestamps, K = spec.hidden, D = spec.dim;
  SyntheticDataset out;
  DynamicGraph& g = out.graph;
  g.node_count = N;
  g.feature_dim = D;
  g.labels.kind = LabelKind::link_occurrence;

  std::vector<int> k(static_cast<std::size_t>(N));
  for (int v = 0; v < N; ++v) k[static_cast<std::size_t>(v)] = v % K;
  std::mt19937_64 r_static(derive_seed(spec.seed, 0xe0));
  const Matrix means = gaussian(K, D, spec.mu_sta, spec.sigma_sta, r_static);
  Matrix base = gaussian(N, D, 0.0, spec.node_spread, r_static);
  for (int v = 0; v < N; ++v) base.row(v) += means.row(k[static_cast<std::size_t>(v)]);

  const auto inv = invariant_hidden(spec);
  std::vector<double> noise(static_cast<std::size_t>(K), spec.high_noise);
  for (int id : inv) noise[static_cast<std::size_t>(id - 1)] = spec.low_noise;

  auto tag = [&](const Edge& e) {
    const int a = k[static_cast<std::size_t>(e.u)], b = k[static_cast<std::size_t>(e.v)];
    return a == b ? "K" + std::to_string(a + 1) : std::string("X");
  };

  for (int t = 1; t <= T + 1; ++t) {
    std::mt19937_64 rng(derive_seed(spec.seed, 0xe1, static_cast<std::uint64_t>(t)));
    Matrix latent, features;
    if (spec.mode == EnvMode::stationary) {
      latent = base + gaussian(N, D, 0.0, spec.jitter, rng);
      features = latent;
      const Matrix eps = gaussian(N, D, 0.0, 1.0, rng);
      for (int v = 0; v < N; ++v) features.row(v) += noise[static_cast<std::size_t>(k[static_cast<std::size_t>(v)])] * eps.row(v);
    } else {
      const Matrix dyn = gaussian(N, D, spec.mu_dyn, spec.sigma_dyn, rng);
      features = (1.0 - spec.gamma_dyn) * base + spec.gamma_dyn * spec.dyn_amplitude(t) * dyn;
      latent = features;
    }
    const auto edges = top_similarity_edges(latent, spec.mean_degree);
    for (const Edge& e : edges) out.provenance.edges.push_back({t, e.u, e.v, tag(e)});
    if (t <= T) {
      g.snapshots.emplace_back(t, N, edges, std::move(features));
    } else {
      for (const Edge& e : edges) g.labels.links.push_back({e.u, e.v, t});
    }
  }
  out.split = split_config(T, spec.val_timestamps, spec.test_timestamps);
  if (spec.mode == EnvMode::stationary && spec.ood_hidden > 0)
    out.split.set("ood_filter", "K" + std::to_string(spec.ood_hidden));
  return out;
}

SyntheticDataset generate_from_kv(const KvConfig& kv) {
  const std::string gen = kv.require("generator");
  if (gen == "sbm") return gen_sbm_node_cls(SbmSpec::from_kv(kv));
  if (gen == "env_stationary") return gen_env_suite(EnvSuiteSpec::from_kv(kv, EnvMode::stationary));
  if (gen == "env_nonstationary") return gen_env_suite(EnvSuiteSpec::from_kv(kv, EnvMode::nonstationary));
  if (gen == "feature_shift") {
    const auto spec = FeatureShiftSpec::from_kv(kv);
    return gen_feature_shift(load_dataset(kv.require("base")), spec);
  }
  throw ConfigError("unknown generator `" + gen + "` (sbm|feature_shift|env_stationary|env_nonstationary)");
}

}  // namespace evogood
