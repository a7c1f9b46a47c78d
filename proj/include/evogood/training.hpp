#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "evogood/autodiff.hpp"
#include "evogood/encoder.hpp"
#include "evogood/esvae.hpp"
#include "evogood/intervention.hpp"
#include "evogood/invariance.hpp"
#include "evogood/kv_config.hpp"
#include "evogood/predictor.hpp"
#include "evogood/seed.hpp"

namespace evogood {

/// Inclusive timestamp range. For link tasks these are prediction
/// timestamps: representations at t score the edges of t + 1.
struct Range {
  int first = 1;
  int last = 0;

  bool empty() const { return last < first; }
  bool contains(int t) const { return t >= first && t <= last; }
  int size() const { return empty() ? 0 : last - first + 1; }
  std::string str() const;
  static Range parse(const std::string& text);  // "a-b" or "a"
};

struct TrainConfig {
  std::string dataset;
  std::string provenance;
  std::string ood_filter;  // comma-separated provenance tags withheld from training
  std::string task = "auto";  // auto | link | node
  TaskKind task_kind = TaskKind::link;
  int epochs = 100;
  double lr = 1e-3;
  std::string optimizer = "adam";  // adam | sgd
  std::uint64_t seed = 1;
  double beta1 = 0.1;
  double beta2 = 0.01;
  Range train_range, val_range, test_range;
  int negative_ratio = 1;
  std::uint64_t eval_seed = 7;  // fixed evaluation negatives shared by all variants
  std::string variant = "full";

  EncoderConfig encoder;
  EsvaeConfig esvae;
  InvarianceConfig invariance;
  InterventionConfig intervention;

  /// Fills defaults for the dataset (input width, class count, split) and checks ranges.
  void resolve(const DynamicGraph& g);
  void check() const;

  static TrainConfig from_kv(const KvConfig& kv);
  /// Every TrainConfig key with its resolved value.
  KvConfig to_kv() const;
  static const std::set<std::string>& keys();
};

/// Apply a named ablation: no-intervention sets beta1 = 0, no-esvae swaps in
/// the shared non-sequential VAE.
void apply_ablation(TrainConfig& cfg, const std::string& name);

/// Number of prediction timestamps available for the task (T for link, T for node).
int prediction_timestamps(const DynamicGraph& g, TaskKind task);

struct Model {
  TaskKind task = TaskKind::link;
  EncoderParams encoder;
  EsvaeParams esvae;
  ad::Parameter w_i;  // 1 x d', shared across nodes
  LinkPredictor link;
  NodePredictor node;

  /// Each component draws from its own stream so shape changes in one leave the others fixed.
  static Model init(const TrainConfig& cfg, int num_classes, std::uint64_t seed);
  std::vector<ad::Parameter*> all();
};

/// Link supervision for one prediction timestamp.
struct LinkBatch {
  int t = 1;
  std::vector<int> us, vs;
  Matrix targets;  // rows x 1
};

/// Node supervision for one labeled timestamp (0-based classes).
struct NodeBatch {
  int t = 1;
  std::vector<int> nodes;
  std::vector<int> classes;
};

struct TaskBatches {
  std::vector<LinkBatch> links;
  std::vector<NodeBatch> nodes;
  bool empty() const { return links.empty() && nodes.empty(); }
};

/// Link batches: positives at t + 1 and `ratio` uniform negatives per positive.
TaskBatches link_batches(const DynamicGraph& g, const Range& range, int ratio, std::mt19937_64& rng);
TaskBatches node_batches(const DynamicGraph& g, const Range& range);

/// Everything held fixed within one epoch so that the loss is a deterministic
/// function of the parameters.
struct EpochContext {
  EsvaeNoise noise;
  PseudoLabelTask pseudo;
  SampleLibrary library;
  InterventionDraws draws;
  std::vector<Matrix> gates;                // per timestamp N x d'
  std::vector<Eigen::MatrixXi> variant;     // per timestamp, 1 where the dim is in P_V
  TaskBatches batches;
};

struct LossTerms {
  ad::Var total;
  ad::Var task;
  ad::Var risk;
  EsvaeTerms esvae;
  std::vector<ad::Var> round_losses;
};

/// H_I at timestamp t for the given gates.
ad::Var invariant_representation(ad::Tape& tape, Model& model, const ad::Var& h, const Matrix& gate);
ad::Var task_loss(ad::Tape& tape, Model& model, const std::vector<ad::Var>& h, const std::vector<Matrix>& gates,
                  const TaskBatches& batches);
double total_loss(double task, double risk, double esvae, double beta1, double beta2);

/// Freeze the epoch: pseudo labels, library, gates, variant patterns, noise,
/// intervention draws and task batches, all from current values of H.
/// Each purpose (noise, batches, draws, ...) gets its own stream derived from
/// epoch_seed, so ablations that skip a stage still see identical batches.
EpochContext build_context(const DynamicGraph& g, const NodeRepresentationSequence& h, const TrainConfig& cfg,
                           Model& model, std::uint64_t epoch_seed);

LossTerms compute_losses(ad::Tape& tape, const std::vector<ad::Var>& h, const TrainConfig& cfg, Model& model,
                         const EpochContext& ctx);

/// Encode + losses for a fixed context; used by finite-difference checks.
LossTerms forward(ad::Tape& tape, const DynamicGraph& g, const GraphTopology& topo, const TrainConfig& cfg,
                  Model& model, const EpochContext& ctx);

struct EpochRecord {
  int epoch = 0;
  double l_task = 0, l_risk = 0, l_svae = 0, l_s = 0, l_d = 0, l_esvae = 0, l_total = 0;
  double val_metric = 0;
  double train_metric = 0;
  double seconds = 0;
};

struct Checkpoint {
  int epoch = 0;
  std::map<std::string, Matrix> params;
  std::vector<Matrix> gates;
  std::vector<TaggedVector> generated;
  double val_metric = 0;
  double train_metric = 0;
};

Checkpoint snapshot_model(Model& model, int epoch);
void restore_model(Model& model, const Checkpoint& ckpt);

struct TrainResult {
  std::vector<EpochRecord> history;
  Checkpoint best;
  Model model;  // holds the best checkpoint's parameters
  TrainConfig config;
  int num_classes = 0;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
};

TrainResult train(const DynamicGraph& g, TrainConfig cfg, const TrainHooks& hooks = {});

/// Encoder output for a graph under fixed parameters.
NodeRepresentationSequence representations(const DynamicGraph& g, const TrainConfig& cfg, Model& model);

/// Per-timestamp evaluation over a range, scored with H_I under the given gates.
struct RangeMetric {
  double value = 0;  // mean over timestamps (link AUC) or pooled accuracy (node)
  std::vector<double> per_timestamp;
};
RangeMetric evaluate_range(const DynamicGraph& g, const NodeRepresentationSequence& h,
                           const std::vector<Matrix>& gates, const TrainConfig& cfg, Model& model,
                           const Range& range);

/// Fixed evaluation negatives for the edges at `target_t`, seeded by (eval_seed, target_t).
std::vector<Edge> evaluation_negatives(const DynamicGraph& g, int target_t, std::uint64_t eval_seed);

/// Probabilities for queried pairs at prediction timestamp t.
std::vector<double> predict_links(const NodeRepresentationSequence& h, const std::vector<Matrix>& gates, Model& model,
                                  int t, std::span<const Edge> pairs);
/// Softmax class distributions (rows) for queried nodes at timestamp t.
Matrix predict_classes(const NodeRepresentationSequence& h, const std::vector<Matrix>& gates, Model& model, int t,
                       std::span<const int> nodes);

class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(std::span<ad::Parameter* const> params);

 private:
  double lr_, b1_, b2_, eps_;
  long step_ = 0;
  std::map<const ad::Parameter*, std::pair<Matrix, Matrix>> moments_;
};

}  // namespace evogood
