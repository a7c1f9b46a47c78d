#include "evogood/encoder.hpp"

#include <cmath>
#include <memory>
#include <cstring>
#include <iomanip>
#include <sstream>

#include "evogood/errors.hpp"

namespace evogood {

void EncoderConfig::check() const {
  if (input_dim <= 0) throw ConfigError("encoder input_dim must be positive");
  if (hidden_dim <= 0) throw ConfigError("encoder hidden_dim must be positive");
  if (layers < 1) throw ConfigError("encoder needs at least one layer");
  if (heads < 1 || hidden_dim % heads != 0)
    throw ConfigError("attention heads (" + std::to_string(heads) + ") must divide hidden_dim (" +
                      std::to_string(hidden_dim) + ")");
}

Matrix glorot_uniform(int rows, int cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg, std::mt19937_64& rng) {
  cfg.check();
  EncoderParams p;
  p.w1 = ad::Parameter("encoder.w1", glorot_uniform(cfg.input_dim, cfg.hidden_dim, rng));
  p.b = ad::Parameter("encoder.b", Matrix::Zero(1, cfg.hidden_dim));
  for (int l = 0; l < cfg.layers; ++l) {
    p.a_src.emplace_back("encoder.a_src." + std::to_string(l), glorot_uniform(cfg.heads, cfg.hidden_dim, rng));
    p.a_dst.emplace_back("encoder.a_dst." + std::to_string(l), glorot_uniform(cfg.heads, cfg.hidden_dim, rng));
  }
  return p;
}

std::vector<ad::Parameter*> EncoderParams::all() {
  std::vector<ad::Parameter*> out{&w1, &b};
  for (std::size_t l = 0; l < a_src.size(); ++l) {
    out.push_back(&a_src[l]);
    out.push_back(&a_dst[l]);
  }
  return out;
}

RowVector relative_time_encoding(int t, int dim) {
  RowVector r(dim);
  for (int j = 0; j < dim; ++j) {
    const int pair = j / 2;
    const double angle = static_cast<double>(t) / std::pow(10000.0, 2.0 * pair / static_cast<double>(dim));
    r(j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
  }
  return r;
}

GraphTopology::GraphTopology(const DynamicGraph& g) {
  for (const Snapshot& s : g.snapshots) {
    kernels::Csr c{s.offsets(), s.indices()};
    csr_.push_back(c);
    reverse_.push_back(kernels::reverse_index(c));
  }
}

namespace {

ad::Var activate(const ad::Var& x, Activation a) {
  switch (a) {
    case Activation::relu: return ad::relu(x);
    case Activation::tanh: return ad::tanh(x);
    default: return x;
  }
}

void require_finite(const Matrix& m, const std::string& where) {
  if (!m.allFinite()) throw NumericalError("non-finite encoder output at " + where);
}

}  // namespace

ad::Var attention(ad::Tape& tape, const ad::Var& z, const kernels::Csr& csr, std::span<const int> reverse,
                  const ad::Var& a_src, const ad::Var& a_dst, double negative_slope, KernelBackend backend) {
  if (z.rows() != csr.node_count()) throw ContractViolation("attention: z rows do not match snapshot size");
  if (a_src.cols() != z.cols() || a_dst.cols() != z.cols()) throw ContractViolation("attention: vector width mismatch");
  auto cache = std::make_shared<kernels::AttentionCache>();
  Matrix out = backend == KernelBackend::parallel
                   ? kernels::parallel::attention_forward(csr, z.value(), a_src.value(), a_dst.value(), negative_slope, *cache)
                   : kernels::serial::attention_forward(csr, z.value(), a_src.value(), a_dst.value(), negative_slope, *cache);
  const bool needs = tape.any_needs_grad({z, a_src, a_dst});
  return tape.record(std::move(out), needs,
                     [z, a_src, a_dst, csr, reverse, negative_slope, backend, cache](ad::Tape& tp, const Matrix& g) {
                       kernels::AttentionGrads grads =
                           backend == KernelBackend::parallel
                               ? kernels::parallel::attention_backward(csr, reverse, z.value(), a_src.value(),
                                                                       a_dst.value(), negative_slope, *cache, g)
                               : kernels::serial::attention_backward(csr, z.value(), a_src.value(), a_dst.value(),
                                                                     negative_slope, *cache, g);
                       tp.accumulate(z, grads.dz);
                       tp.accumulate(a_src, grads.da_src);
                       tp.accumulate(a_dst, grads.da_dst);
                     });
}

std::vector<ad::Var> encode(ad::Tape& tape, const DynamicGraph& g, const GraphTopology& topo,
                            const EncoderConfig& cfg, EncoderParams& params) {
  cfg.check();
  if (g.feature_dim != cfg.input_dim)
    throw ConfigError("encoder expects input_dim " + std::to_string(cfg.input_dim) + ", graph has " +
                      std::to_string(g.feature_dim));
  const int T = g.num_timestamps();
  ad::Var w1 = tape.param(params.w1);
  ad::Var b = tape.param(params.b);

  std::vector<ad::Var> z;
  z.reserve(static_cast<std::size_t>(T));
  for (int t = 1; t <= T; ++t) {
    const Matrix& x = g.at(t).features();
    Matrix shifted = x.rowwise() + relative_time_encoding(t, cfg.input_dim);
    ad::Var proj = ad::add_row(ad::matmul(tape.constant(std::move(shifted)), w1), b);
    z.push_back(activate(proj, cfg.activation));
  }

  for (int l = 0; l < cfg.layers; ++l) {
    ad::Var as = tape.param(params.a_src[static_cast<std::size_t>(l)]);
    ad::Var adst = tape.param(params.a_dst[static_cast<std::size_t>(l)]);
    std::vector<ad::Var> next;
    next.reserve(z.size());
    ad::Var running;
    for (int t = 1; t <= T; ++t) {
      ad::Var zh = attention(tape, z[static_cast<std::size_t>(t - 1)], topo.csr(t), topo.reverse(t), as, adst,
                             cfg.negative_slope, cfg.backend);
      require_finite(zh.value(), "layer " + std::to_string(l + 1) + ", t=" + std::to_string(t));
      running = (t == 1) ? zh : ad::add(running, zh);
      next.push_back(ad::scale(running, 1.0 / static_cast<double>(t)));
    }
    z = std::move(next);
  }
  return z;
}

Matrix project_features(const Matrix& x, int t, const EncoderConfig& cfg, const EncoderParams& params) {
  if (t < 1) throw ContractViolation("timestamps start at 1");
  if (x.cols() != params.w1.value.rows())
    throw ConfigError("feature width " + std::to_string(x.cols()) + " does not match W1 rows " +
                      std::to_string(params.w1.value.rows()));
  Matrix pre = (x.rowwise() + relative_time_encoding(t, static_cast<int>(x.cols()))) * params.w1.value;
  pre.rowwise() += params.b.value.row(0);
  switch (cfg.activation) {
    case Activation::relu: return pre.cwiseMax(0.0);
    case Activation::tanh: return pre.array().tanh().matrix();
    default: return pre;
  }
}

Matrix spatial_attention_layer(const Matrix& z, const Snapshot& snapshot, const Matrix& a_src, const Matrix& a_dst,
                               double negative_slope, KernelBackend backend) {
  if (z.rows() != snapshot.node_count()) throw ContractViolation("z rows do not match snapshot size");
  kernels::Csr csr{snapshot.offsets(), snapshot.indices()};
  kernels::AttentionCache cache;
  return backend == KernelBackend::parallel
             ? kernels::parallel::attention_forward(csr, z, a_src, a_dst, negative_slope, cache)
             : kernels::serial::attention_forward(csr, z, a_src, a_dst, negative_slope, cache);
}

std::vector<double> attention_weights(const Matrix& z, const Snapshot& snapshot, const Matrix& a_src,
                                      const Matrix& a_dst, double negative_slope) {
  kernels::Csr csr{snapshot.offsets(), snapshot.indices()};
  kernels::AttentionCache cache;
  kernels::parallel::attention_forward(csr, z, a_src, a_dst, negative_slope, cache);
  std::vector<double> w(static_cast<std::size_t>(cache.alpha.rows()));
  for (Eigen::Index e = 0; e < cache.alpha.rows(); ++e) w[static_cast<std::size_t>(e)] = cache.alpha.row(e).mean();
  return w;
}

NodeRepresentationSequence temporal_aggregate(const std::vector<Matrix>& z_hat) {
  NodeRepresentationSequence h;
  if (z_hat.empty()) return h;
  Matrix running = Matrix::Zero(z_hat[0].rows(), z_hat[0].cols());
  for (std::size_t t = 0; t < z_hat.size(); ++t) {
    if (z_hat[t].rows() != running.rows() || z_hat[t].cols() != running.cols())
      throw ContractViolation("temporal_aggregate: shape mismatch at t=" + std::to_string(t + 1));
    running += z_hat[t];
    h.values.push_back(running / static_cast<double>(t + 1));
  }
  return h;
}

NodeRepresentationSequence encode(const DynamicGraph& g, const EncoderConfig& cfg, EncoderParams& params) {
  GraphTopology topo(g);
  ad::Tape tape(false);
  auto vars = encode(tape, g, topo, cfg, params);
  NodeRepresentationSequence h;
  for (const auto& v : vars) h.values.push_back(v.value());
  auto ps = params.all();
  h.produced_by = fingerprint(ps);
  return h;
}

std::string fingerprint(std::span<ad::Parameter* const> params) {
  std::uint64_t hash = 14695981039346656037ULL;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash ^= bytes[i];
      hash *= 1099511628211ULL;
    }
  };
  for (const ad::Parameter* p : params) {
    mix(p->name.data(), p->name.size());
    mix(p->value.data(), sizeof(double) * static_cast<std::size_t>(p->value.size()));
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << hash;
  return out.str();
}

}  // namespace evogood
