#include "evogood/training.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "evogood/errors.hpp"
#include "evogood/evaluation.hpp"
#include "evogood/graph_io.hpp"

namespace evogood {

// ---- configuration ----------------------------------------------------------

std::string Range::str() const {
  if (empty()) return "none";
  return first == last ? std::to_string(first) : std::to_string(first) + "-" + std::to_string(last);
}

Range Range::parse(const std::string& text) {
  if (text == "none" || text.empty()) return Range{1, 0};
  const auto dash = text.find('-');
  try {
    std::size_t used = 0;
    if (dash == std::string::npos) {
      const int t = std::stoi(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return {t, t};
    }
    const int a = std::stoi(text.substr(0, dash), &used);
    if (used != dash) throw std::invalid_argument(text);
    const std::string rest = text.substr(dash + 1);
    const int b = std::stoi(rest, &used);
    if (used != rest.size()) throw std::invalid_argument(text);
    return {a, b};
  } catch (const std::logic_error&) {
    throw ConfigError("cannot parse timestamp range `" + text + "` (expected a-b)");
  }
}

namespace {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    default: return "identity";
  }
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation `" + s + "` (relu|tanh|identity)");
}

}  // namespace

const std::set<std::string>& TrainConfig::keys() {
  static const std::set<std::string> k{
      "dataset", "provenance", "ood_filter", "task", "epochs", "lr", "optimizer", "seed", "beta1", "beta2",
      "train_range", "val_range", "test_range", "negative_ratio", "eval_seed", "variant",
      "hidden_dim", "layers", "heads", "negative_slope", "activation", "kernel_backend",
      "static_dim", "dynamic_dim", "decoder_hidden", "clusters", "top_k", "kmeans_restarts", "esvae_samples",
      "margin", "alpha1", "alpha2", "esvae_mode",
      "delta", "cutoff", "gate_per_timestamp", "gate_layer_norm",
      "rounds", "intervention_ratio", "gen_fraction", "match_timestamp", "generated_count", "intervene_all_timestamps"};
  return k;
}

TrainConfig TrainConfig::from_kv(const KvConfig& kv) {
  const auto unknown = kv.unknown_keys(keys());
  if (!unknown.empty()) throw ConfigError("unknown config key `" + *unknown.begin() + "`");
  TrainConfig c;
  c.dataset = kv.get("dataset", "");
  c.provenance = kv.get("provenance", "");
  c.ood_filter = kv.get("ood_filter", "");
  c.task = kv.get("task", "auto");
  if (c.task != "auto" && c.task != "link" && c.task != "node") throw ConfigError("task must be auto, link or node");
  c.epochs = kv.get_int("epochs", c.epochs);
  c.lr = kv.get_double("lr", c.lr);
  c.optimizer = kv.get("optimizer", c.optimizer);
  c.seed = kv.get_u64("seed", c.seed);
  c.beta1 = kv.get_double("beta1", c.beta1);
  c.beta2 = kv.get_double("beta2", c.beta2);
  if (kv.has("train_range")) c.train_range = Range::parse(kv.require("train_range"));
  if (kv.has("val_range")) c.val_range = Range::parse(kv.require("val_range"));
  if (kv.has("test_range")) c.test_range = Range::parse(kv.require("test_range"));
  c.negative_ratio = kv.get_int("negative_ratio", c.negative_ratio);
  c.eval_seed = kv.get_u64("eval_seed", c.eval_seed);
  c.variant = kv.get("variant", c.variant);

  c.encoder.hidden_dim = kv.get_int("hidden_dim", c.encoder.hidden_dim);
  c.encoder.layers = kv.get_int("layers", c.encoder.layers);
  c.encoder.heads = kv.get_int("heads", c.encoder.heads);
  c.encoder.negative_slope = kv.get_double("negative_slope", c.encoder.negative_slope);
  c.encoder.activation = parse_activation(kv.get("activation", "relu"));
  const std::string backend = kv.get("kernel_backend", "parallel");
  if (backend != "parallel" && backend != "serial") throw ConfigError("kernel_backend must be parallel or serial");
  c.encoder.backend = backend == "serial" ? KernelBackend::serial : KernelBackend::parallel;

  c.esvae.static_dim = kv.get_int("static_dim", c.esvae.static_dim);
  c.esvae.dynamic_dim = kv.get_int("dynamic_dim", c.esvae.dynamic_dim);
  c.esvae.decoder_hidden = kv.get_int("decoder_hidden", c.esvae.decoder_hidden);
  c.esvae.clusters = kv.get_int("clusters", c.esvae.clusters);
  c.esvae.top_k = kv.get_int("top_k", c.esvae.top_k);
  c.esvae.kmeans_restarts = kv.get_int("kmeans_restarts", c.esvae.kmeans_restarts);
  c.esvae.samples = kv.get_int("esvae_samples", c.esvae.samples);
  c.esvae.margin = kv.get_double("margin", c.esvae.margin);
  c.esvae.alpha1 = kv.get_double("alpha1", c.esvae.alpha1);
  c.esvae.alpha2 = kv.get_double("alpha2", c.esvae.alpha2);
  const std::string mode = kv.get("esvae_mode", "sequential");
  if (mode != "sequential" && mode != "shared") throw ConfigError("esvae_mode must be sequential or shared");
  c.esvae.sequential = mode == "sequential";

  c.invariance.delta = kv.get_double("delta", c.invariance.delta);
  c.invariance.cutoff = kv.get_double("cutoff", c.invariance.cutoff);
  c.invariance.per_timestamp = kv.get_bool("gate_per_timestamp", c.invariance.per_timestamp);
  c.invariance.layer_norm = kv.get_bool("gate_layer_norm", c.invariance.layer_norm);

  c.intervention.rounds = kv.get_int("rounds", c.intervention.rounds);
  c.intervention.ratio = kv.get_double("intervention_ratio", c.intervention.ratio);
  c.intervention.gen_fraction = kv.get_double("gen_fraction", c.intervention.gen_fraction);
  c.intervention.match_timestamp = kv.get_bool("match_timestamp", c.intervention.match_timestamp);
  c.intervention.generated_count = kv.get_int("generated_count", c.intervention.generated_count);
  c.intervention.all_timestamps = kv.get_bool("intervene_all_timestamps", c.intervention.all_timestamps);
  return c;
}

KvConfig TrainConfig::to_kv() const {
  KvConfig kv;
  auto real = [](double x) { return format_real(x); };
  kv.set("dataset", dataset);
  kv.set("provenance", provenance);
  kv.set("ood_filter", ood_filter);
  kv.set("task", task);
  kv.set("epochs", std::to_string(epochs));
  kv.set("lr", real(lr));
  kv.set("optimizer", optimizer);
  kv.set("seed", std::to_string(seed));
  kv.set("beta1", real(beta1));
  kv.set("beta2", real(beta2));
  kv.set("train_range", train_range.str());
  kv.set("val_range", val_range.str());
  kv.set("test_range", test_range.str());
  kv.set("negative_ratio", std::to_string(negative_ratio));
  kv.set("eval_seed", std::to_string(eval_seed));
  kv.set("variant", variant);
  kv.set("hidden_dim", std::to_string(encoder.hidden_dim));
  kv.set("layers", std::to_string(encoder.layers));
  kv.set("heads", std::to_string(encoder.heads));
  kv.set("negative_slope", real(encoder.negative_slope));
  kv.set("activation", activation_name(encoder.activation));
  kv.set("kernel_backend", encoder.backend == KernelBackend::serial ? "serial" : "parallel");
  kv.set("static_dim", std::to_string(esvae.static_dim));
  kv.set("dynamic_dim", std::to_string(esvae.dynamic_dim));
  kv.set("decoder_hidden", std::to_string(esvae.decoder_hidden));
  kv.set("clusters", std::to_string(esvae.clusters));
  kv.set("top_k", std::to_string(esvae.top_k));
  kv.set("kmeans_restarts", std::to_string(esvae.kmeans_restarts));
  kv.set("esvae_samples", std::to_string(esvae.samples));
  kv.set("margin", real(esvae.margin));
  kv.set("alpha1", real(esvae.alpha1));
  kv.set("alpha2", real(esvae.alpha2));
  kv.set("esvae_mode", esvae.sequential ? "sequential" : "shared");
  kv.set("delta", real(invariance.delta));
  kv.set("cutoff", real(invariance.cutoff));
  kv.set("gate_per_timestamp", invariance.per_timestamp ? "true" : "false");
  kv.set("gate_layer_norm", invariance.layer_norm ? "true" : "false");
  kv.set("rounds", std::to_string(intervention.rounds));
  kv.set("intervention_ratio", real(intervention.ratio));
  kv.set("gen_fraction", real(intervention.gen_fraction));
  kv.set("match_timestamp", intervention.match_timestamp ? "true" : "false");
  kv.set("generated_count", std::to_string(intervention.generated_count));
  kv.set("intervene_all_timestamps", intervention.all_timestamps ? "true" : "false");
  return kv;
}

int prediction_timestamps(const DynamicGraph& g, TaskKind task) {
  const int T = g.num_timestamps();
  if (task == TaskKind::node) return T;
  return g.labels.links.empty() ? T - 1 : T;
}

void TrainConfig::resolve(const DynamicGraph& g) {
  if (task == "auto") {
    if (g.labels.kind == LabelKind::node_class) task_kind = TaskKind::node;
    else if (g.labels.kind == LabelKind::link_occurrence || g.num_timestamps() > 1) task_kind = TaskKind::link;
    else throw ConfigError("cannot infer the task: dataset has no labels and a single snapshot");
  } else {
    task_kind = task == "node" ? TaskKind::node : TaskKind::link;
  }
  if (task_kind == TaskKind::node && g.labels.kind != LabelKind::node_class)
    throw ConfigError("node task needs class labels in the dataset");
  encoder.input_dim = g.feature_dim;
  encoder.seed = seed;
  esvae.input_dim = encoder.hidden_dim;

  const int P = prediction_timestamps(g, task_kind);
  if (P < 1) throw ConfigError("dataset has no prediction timestamps");
  if (train_range.empty() && val_range.empty() && test_range.empty()) {
    const int n_test = std::max(1, P / 4);
    const int n_val = P >= 3 ? std::max(1, P / 8) : 0;
    const int n_train = P - n_test - n_val;
    if (n_train < 1) throw ConfigError("too few timestamps for a train/val/test split; set the ranges explicitly");
    train_range = {1, n_train};
    val_range = n_val ? Range{n_train + 1, n_train + n_val} : Range{1, 0};
    test_range = {n_train + n_val + 1, P};
  }
  for (const Range* r : {&train_range, &val_range, &test_range})
    if (!r->empty() && (r->first < 1 || r->last > P))
      throw ConfigError("range " + r->str() + " lies outside prediction timestamps 1-" + std::to_string(P));
  check();
}

void TrainConfig::check() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (lr <= 0) throw ConfigError("lr must be positive");
  if (optimizer != "adam" && optimizer != "sgd") throw ConfigError("optimizer must be adam or sgd");
  if (beta1 < 0 || beta2 < 0) throw ConfigError("beta1 and beta2 must be non-negative");
  if (negative_ratio < 1) throw ConfigError("negative_ratio must be >= 1");
  if (train_range.empty()) throw ConfigError("train_range is empty");
  auto before = [](const Range& a, const Range& b) { return a.empty() || b.empty() || a.last < b.first; };
  if (!before(train_range, val_range) || !before(val_range, test_range) || !before(train_range, test_range))
    throw ConfigError("train, val and test ranges must be disjoint and ordered");
  encoder.check();
  esvae.check();
  invariance.check();
  if (beta1 > 0) intervention.check();
}

void apply_ablation(TrainConfig& cfg, const std::string& name) {
  if (name == "no-intervention") {
    cfg.beta1 = 0.0;
  } else if (name == "no-esvae") {
    cfg.esvae.sequential = false;
  } else if (name != "full" && !name.empty()) {
    throw ConfigError("unknown ablation `" + name + "` (no-intervention|no-esvae)");
  }
  cfg.variant = name.empty() ? "full" : name;
}

// ---- model -------------------------------------------------------------------

Model Model::init(const TrainConfig& cfg, int num_classes, std::uint64_t seed) {
  Model m;
  m.task = cfg.task_kind;
  std::mt19937_64 r_enc(derive_seed(seed, 1)), r_vae(derive_seed(seed, 2)), r_inv(derive_seed(seed, 3)),
      r_link(derive_seed(seed, 4)), r_node(derive_seed(seed, 5));
  m.encoder = EncoderParams::init(cfg.encoder, r_enc);
  m.esvae = EsvaeParams::init(cfg.esvae, r_vae);
  m.w_i = ad::Parameter("invariance.w_i", glorot_uniform(1, cfg.encoder.hidden_dim, r_inv));
  m.link = LinkPredictor::init(cfg.encoder.hidden_dim, r_link);
  m.node = NodePredictor::init(cfg.encoder.hidden_dim, std::max(1, num_classes), r_node);
  return m;
}

std::vector<ad::Parameter*> Model::all() {
  std::vector<ad::Parameter*> out = encoder.all();
  for (ad::Parameter* p : esvae.all()) out.push_back(p);
  out.push_back(&w_i);
  if (task == TaskKind::link) link.collect(out);
  else node.collect(out);
  return out;
}

// ---- batches -----------------------------------------------------------------

TaskBatches link_batches(const DynamicGraph& g, const Range& range, int ratio, std::mt19937_64& rng) {
  TaskBatches b;
  for (int t = range.first; t <= range.last; ++t) {
    const std::vector<Edge> pos = g.edges_at(t + 1);
    if (pos.empty()) continue;
    PairSet existing(pos);
    const auto neg = sample_non_edges(g.node_count, existing, pos.size() * static_cast<std::size_t>(ratio), rng);
    LinkBatch lb;
    lb.t = t;
    for (const Edge& e : pos) {
      lb.us.push_back(e.u);
      lb.vs.push_back(e.v);
    }
    for (const Edge& e : neg) {
      lb.us.push_back(e.u);
      lb.vs.push_back(e.v);
    }
    lb.targets = Matrix::Zero(static_cast<Eigen::Index>(lb.us.size()), 1);
    lb.targets.topRows(static_cast<Eigen::Index>(pos.size())).setOnes();
    b.links.push_back(std::move(lb));
  }
  return b;
}

TaskBatches node_batches(const DynamicGraph& g, const Range& range) {
  TaskBatches b;
  std::map<int, NodeBatch> by_t;
  for (const ClassLabel& l : g.labels.classes) {
    if (!range.contains(l.t)) continue;
    NodeBatch& nb = by_t[l.t];
    nb.t = l.t;
    nb.nodes.push_back(l.v);
    nb.classes.push_back(l.c - 1);
  }
  for (auto& [t, nb] : by_t) b.nodes.push_back(std::move(nb));
  return b;
}

// ---- losses ------------------------------------------------------------------

ad::Var invariant_representation(ad::Tape& tape, Model& model, const ad::Var& h, const Matrix& gate) {
  return invariant_part(h, invariant_mask(tape.param(model.w_i), gate));
}

ad::Var task_loss(ad::Tape& tape, Model& model, const std::vector<ad::Var>& h, const std::vector<Matrix>& gates,
                  const TaskBatches& batches) {
  if (batches.empty()) throw ConfigError("no labels in the training range");
  ad::Var w_i = tape.param(model.w_i);
  auto h_inv = [&](int t) {
    const auto i = static_cast<std::size_t>(t - 1);
    return invariant_part(h.at(i), invariant_mask(w_i, gates.at(i)));
  };
  if (model.task == TaskKind::link) {
    std::vector<ad::Var> logits;
    Matrix targets(0, 1);
    for (const LinkBatch& lb : batches.links) {
      logits.push_back(model.link.logits(tape, h_inv(lb.t), lb.us, lb.vs));
      Matrix grown(targets.rows() + lb.targets.rows(), 1);
      grown << targets, lb.targets;
      targets = std::move(grown);
    }
    return ad::bce_with_logits(ad::concat_rows(logits), targets);
  }
  std::vector<ad::Var> logits;
  std::vector<int> labels;
  for (const NodeBatch& nb : batches.nodes) {
    logits.push_back(model.node.logits(tape, h_inv(nb.t), nb.nodes));
    labels.insert(labels.end(), nb.classes.begin(), nb.classes.end());
  }
  return ad::cross_entropy(ad::concat_rows(logits), labels);
}

double total_loss(double task, double risk, double esvae, double beta1, double beta2) {
  if (beta1 < 0 || beta2 < 0) throw ConfigError("beta1 and beta2 must be non-negative");
  return task + beta1 * risk + beta2 * esvae;
}

EpochContext build_context(const DynamicGraph& g, const NodeRepresentationSequence& h, const TrainConfig& cfg,
                           Model& model, std::uint64_t epoch_seed) {
  EpochContext ctx;
  const int T = h.timestamps();
  std::mt19937_64 r_noise(derive_seed(epoch_seed, 11)), r_batch(derive_seed(epoch_seed, 12)),
      r_draw(derive_seed(epoch_seed, 13));

  ctx.noise = EsvaeNoise::draw(cfg.esvae, T, r_noise);
  if (cfg.esvae.sequential)
    ctx.pseudo = cluster_pseudo_labels(g, h, cfg.esvae.clusters, cfg.esvae.top_k, cfg.esvae.kmeans_restarts,
                                       derive_seed(epoch_seed, 14));

  ctx.gates = compute_gates(h, cfg.invariance);
  const RowVector sig = (1.0 + (-model.w_i.value.array()).exp()).inverse().matrix();
  for (const Matrix& gate : ctx.gates) {
    Matrix m_i = gate.array().rowwise() * sig.array();
    ctx.variant.push_back(variant_indicator(m_i, cfg.invariance.cutoff));
  }

  ctx.batches = cfg.task_kind == TaskKind::link ? link_batches(g, cfg.train_range, cfg.negative_ratio, r_batch)
                                                : node_batches(g, cfg.train_range);

  if (cfg.beta1 > 0) {
    ctx.library = build_observed_library(h);
    ctx.library.seed = epoch_seed;
    const int count = cfg.intervention.generated_count < 0 ? g.node_count : cfg.intervention.generated_count;
    if (cfg.intervention.gen_fraction > 0 && count > 0)
      ctx.library.set_generated(sample_generated_library(cfg.esvae, model.esvae, T, count, derive_seed(epoch_seed, 15)));
    InterventionPlan plan;
    plan.rounds = cfg.intervention.rounds;
    std::set<int> target_ts;
    for (const LinkBatch& lb : ctx.batches.links) target_ts.insert(lb.t);
    for (const NodeBatch& nb : ctx.batches.nodes) target_ts.insert(nb.t);
    if (!cfg.intervention.all_timestamps && !target_ts.empty()) target_ts = {*target_ts.rbegin()};
    for (int t : target_ts)
      for (int v = 0; v < g.node_count; ++v) plan.targets.push_back({v, t});
    ctx.draws = draw_interventions(ctx.library, plan, cfg.intervention, r_draw);
  }
  return ctx;
}

LossTerms compute_losses(ad::Tape& tape, const std::vector<ad::Var>& h, const TrainConfig& cfg, Model& model,
                         const EpochContext& ctx) {
  LossTerms out;
  out.esvae = esvae_forward(tape, h, ctx.pseudo, ctx.noise, cfg.esvae, model.esvae);
  out.task = task_loss(tape, model, h, ctx.gates, ctx.batches);
  if (cfg.beta1 > 0 && !ctx.draws.rounds.empty()) {
    auto closure = [&](const std::vector<ad::Var>& hp) { return task_loss(tape, model, hp, ctx.gates, ctx.batches); };
    RiskResult r = risk_loss(closure, h, ctx.library, ctx.draws, ctx.variant);
    out.risk = r.risk;
    out.round_losses = std::move(r.round_losses);
  } else {
    out.risk = tape.constant(Matrix::Zero(1, 1));
  }
  out.total = ad::add(out.task, ad::add(ad::scale(out.risk, cfg.beta1), ad::scale(out.esvae.total, cfg.beta2)));
  return out;
}

LossTerms forward(ad::Tape& tape, const DynamicGraph& g, const GraphTopology& topo, const TrainConfig& cfg,
                  Model& model, const EpochContext& ctx) {
  auto h = encode(tape, g, topo, cfg.encoder, model.encoder);
  return compute_losses(tape, h, cfg, model, ctx);
}

// ---- evaluation helpers ------------------------------------------------------

std::vector<Edge> evaluation_negatives(const DynamicGraph& g, int target_t, std::uint64_t eval_seed) {
  const std::vector<Edge> pos = g.edges_at(target_t);
  std::mt19937_64 rng(derive_seed(eval_seed, 0xe7a1, static_cast<std::uint64_t>(target_t)));
  return sample_non_edges(g.node_count, PairSet(pos), pos.size(), rng);
}

namespace {

Matrix invariant_values(const NodeRepresentationSequence& h, const std::vector<Matrix>& gates, const Model& model,
                        int t) {
  if (t < 1 || t > h.timestamps()) throw IndexError("timestamp " + std::to_string(t) + " outside 1.." +
                                                    std::to_string(h.timestamps()));
  const RowVector sig = (1.0 + (-model.w_i.value.array()).exp()).inverse().matrix();
  const Matrix& gate = gates.at(static_cast<std::size_t>(t - 1));
  return (h.at(t).array() * gate.array()).rowwise() * sig.array();
}

}  // namespace

std::vector<double> predict_links(const NodeRepresentationSequence& h, const std::vector<Matrix>& gates, Model& model,
                                  int t, std::span<const Edge> pairs) {
  const Matrix hi = invariant_values(h, gates, model, t);
  std::vector<int> us, vs;
  for (const Edge& e : pairs) {
    us.push_back(e.u);
    vs.push_back(e.v);
  }
  const Eigen::VectorXd logits = model.link.logits(hi, us, vs);
  std::vector<double> p(pairs.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double z = logits(static_cast<Eigen::Index>(i));
    p[i] = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  return p;
}

Matrix predict_classes(const NodeRepresentationSequence& h, const std::vector<Matrix>& gates, Model& model, int t,
                       std::span<const int> nodes) {
  const Matrix hi = invariant_values(h, gates, model, t);
  Matrix logits = model.node.logits(hi, nodes);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - mx).exp();
    logits.row(i) /= logits.row(i).sum();
  }
  return logits;
}

RangeMetric evaluate_range(const DynamicGraph& g, const NodeRepresentationSequence& h,
                           const std::vector<Matrix>& gates, const TrainConfig& cfg, Model& model,
                           const Range& range) {
  RangeMetric m;
  if (range.empty()) return m;
  if (cfg.task_kind == TaskKind::link) {
    for (int t = range.first; t <= range.last; ++t) {
      std::vector<Edge> pairs = g.edges_at(t + 1);
      if (pairs.empty()) continue;
      const std::size_t n_pos = pairs.size();
      const auto neg = evaluation_negatives(g, t + 1, cfg.eval_seed);
      pairs.insert(pairs.end(), neg.begin(), neg.end());
      const auto scores = predict_links(h, gates, model, t, pairs);
      std::vector<int> labels(pairs.size(), 0);
      std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_pos), 1);
      m.per_timestamp.push_back(auc(scores, labels));
    }
    if (m.per_timestamp.empty()) throw ConfigError("no positive edges in range " + range.str());
    m.value = mean(m.per_timestamp);
    return m;
  }
  std::vector<int> pred_all, label_all;
  for (const NodeBatch& nb : node_batches(g, range).nodes) {
    const Matrix probs = predict_classes(h, gates, model, nb.t, nb.nodes);
    std::vector<int> pred(nb.nodes.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
      Eigen::Index arg;
      probs.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
      pred[i] = static_cast<int>(arg);
    }
    m.per_timestamp.push_back(accuracy(pred, nb.classes));
    pred_all.insert(pred_all.end(), pred.begin(), pred.end());
    label_all.insert(label_all.end(), nb.classes.begin(), nb.classes.end());
  }
  if (label_all.empty()) throw ConfigError("no class labels in range " + range.str());
  m.value = accuracy(pred_all, label_all);
  return m;
}

NodeRepresentationSequence representations(const DynamicGraph& g, const TrainConfig& cfg, Model& model) {
  return encode(g, cfg.encoder, model.encoder);
}

// ---- checkpoints and optimisation ---------------------------------------------

Checkpoint snapshot_model(Model& model, int epoch) {
  Checkpoint c;
  c.epoch = epoch;
  for (ad::Parameter* p : model.all()) {
    if (c.params.count(p->name)) throw ContractViolation("duplicate parameter name " + p->name);
    c.params[p->name] = p->value;
  }
  return c;
}

void restore_model(Model& model, const Checkpoint& ckpt) {
  for (ad::Parameter* p : model.all()) {
    auto it = ckpt.params.find(p->name);
    if (it == ckpt.params.end()) throw ConfigError("checkpoint lacks parameter " + p->name);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw ConfigError("dimension mismatch for " + p->name + ": checkpoint " + std::to_string(it->second.rows()) +
                        "x" + std::to_string(it->second.cols()) + ", model " + std::to_string(p->value.rows()) + "x" +
                        std::to_string(p->value.cols()));
    p->value = it->second;
  }
}

void Adam::step(std::span<ad::Parameter* const> params) {
  ++step_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(step_));
  for (ad::Parameter* p : params) {
    auto [it, fresh] = moments_.try_emplace(p);
    if (fresh) {
      it->second.first = Matrix::Zero(p->value.rows(), p->value.cols());
      it->second.second = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    Matrix& m = it->second.first;
    Matrix& v = it->second.second;
    m = b1_ * m + (1.0 - b1_) * p->grad;
    v = b2_ * v + (1.0 - b2_) * p->grad.cwiseProduct(p->grad);
    p->value.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

TrainResult train(const DynamicGraph& g, TrainConfig cfg, const TrainHooks& hooks) {
  const auto problems = validate(g);
  if (!problems.empty())
    throw ConfigError("dataset fails validation: " + problems.front().kind + " at t=" + std::to_string(problems.front().t) +
                      " (" + problems.front().message + ")");
  cfg.resolve(g);

  TrainResult result;
  result.num_classes = g.labels.num_classes;
  result.config = cfg;
  result.model = Model::init(cfg, result.num_classes, cfg.seed);
  Model& model = result.model;
  const auto params = model.all();
  GraphTopology topo(g);
  Adam adam(cfg.lr);
  double best_val = -std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    ad::Tape tape(true);
    auto h_vars = encode(tape, g, topo, cfg.encoder, model.encoder);
    NodeRepresentationSequence h;
    for (const auto& v : h_vars) h.values.push_back(v.value());
    EpochContext ctx = build_context(g, h, cfg, model, derive_seed(cfg.seed, 100, static_cast<std::uint64_t>(epoch)));
    LossTerms terms = compute_losses(tape, h_vars, cfg, model, ctx);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.l_task = terms.task.scalar();
    rec.l_risk = terms.risk.scalar();
    rec.l_svae = terms.esvae.svae.scalar();
    rec.l_s = terms.esvae.l_s.scalar();
    rec.l_d = terms.esvae.l_d.scalar();
    rec.l_esvae = terms.esvae.total.scalar();
    rec.l_total = terms.total.scalar();
    if (!std::isfinite(rec.l_total))
      throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + " (task " + format_real(rec.l_task) +
                           ", risk " + format_real(rec.l_risk) + ", esvae " + format_real(rec.l_esvae) + ")");
    rec.train_metric = evaluate_range(g, h, ctx.gates, cfg, model, cfg.train_range).value;
    rec.val_metric = cfg.val_range.empty() ? rec.train_metric
                                           : evaluate_range(g, h, ctx.gates, cfg, model, cfg.val_range).value;

    if (rec.val_metric > best_val) {
      best_val = rec.val_metric;
      result.best = snapshot_model(model, epoch);
      result.best.gates = ctx.gates;
      result.best.val_metric = rec.val_metric;
      result.best.train_metric = rec.train_metric;
      result.best.generated.clear();
      for (const LibrarySample& s : ctx.library.generated) result.best.generated.push_back({s.value, s.t});
    }

    for (ad::Parameter* p : params) p->zero_grad();
    tape.backward(terms.total);
    if (cfg.optimizer == "sgd") {
      for (ad::Parameter* p : params) p->value -= cfg.lr * p->grad;
    } else {
      adam.step(params);
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  restore_model(model, result.best);
  return result;
}

}  // namespace evogood
