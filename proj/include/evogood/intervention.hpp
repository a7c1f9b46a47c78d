#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "evogood/autodiff.hpp"
#include "evogood/encoder.hpp"
#include "evogood/esvae.hpp"

namespace evogood {

enum class SampleSource { observed, generated };

struct LibrarySample {
  RowVector value;
  int t = 1;
  SampleSource source = SampleSource::observed;
  int node = -1;  // observed samples only
};

/// Replacement sources S = S_ob ∪ S_ge. Observed entries are detached copies
/// of H; generated entries come from the ESVAE prior chain.
struct SampleLibrary {
  std::vector<LibrarySample> observed;
  std::vector<LibrarySample> generated;
  std::uint64_t seed = 0;

  std::size_t size() const { return observed.size() + generated.size(); }
  bool empty() const { return size() == 0; }
  /// Library-wide id: observed entries first, then generated.
  const LibrarySample& at(int id) const;
  void set_generated(const std::vector<TaggedVector>& samples);
};

SampleLibrary build_observed_library(const NodeRepresentationSequence& h);

struct InterventionTarget {
  int node = 0;
  int t = 1;
};

struct InterventionConfig {
  int rounds = 4;              // S
  double ratio = 1.0;          // fraction of candidate targets intervened per round
  double gen_fraction = 0.5;   // probability a draw uses S_ge (when nonempty)
  bool match_timestamp = false;
  int generated_count = -1;    // prior chains per epoch; -1 uses N
  bool all_timestamps = false; // target every supervised timestamp, not only the last

  void check() const;
};

struct InterventionPlan {
  std::vector<InterventionTarget> targets;
  int rounds = 4;
};

/// Source sample ids chosen for every round and target; frozen within an epoch.
struct InterventionDraws {
  struct Round {
    std::vector<InterventionTarget> targets;
    std::vector<int> sources;  // library ids aligned with targets
  };
  std::vector<Round> rounds;
};

InterventionDraws draw_interventions(const SampleLibrary& library, const InterventionPlan& plan,
                                     const InterventionConfig& cfg, std::mt19937_64& rng);

/// h with the coordinates in p_v taken from s.
RowVector intervene(const RowVector& h, const std::vector<int>& p_v, const RowVector& s);

double population_variance(std::span<const double> xs);
ad::Var population_variance(std::span<const ad::Var> scalars);

/// Builds, per timestamp, the keep mask and replacement matrix of one round:
/// h' = H^t ⊙ keep + replace. `variant` is the N x d' indicator of P_V at t.
struct RoundEdit {
  Matrix keep;
  Matrix replace;
};
std::vector<RoundEdit> round_edits(const InterventionDraws::Round& round, const SampleLibrary& library,
                                   const std::vector<Eigen::MatrixXi>& variant, int node_count, int dim);

/// Task loss closure over (possibly intervened) per-timestamp representations.
using TaskLossFn = std::function<ad::Var(const std::vector<ad::Var>& h)>;

struct RiskResult {
  ad::Var risk;
  std::vector<ad::Var> round_losses;
};
/// Variance over rounds of the task loss on intervened representations.
RiskResult risk_loss(const TaskLossFn& task_loss, const std::vector<ad::Var>& h, const SampleLibrary& library,
                     const InterventionDraws& draws, const std::vector<Eigen::MatrixXi>& variant);

/// Value-level form used by tests and tooling.
double risk_loss(const std::function<double(const std::vector<Matrix>&)>& task_loss, const NodeRepresentationSequence& h,
                 const SampleLibrary& library, const InterventionDraws& draws,
                 const std::vector<Eigen::MatrixXi>& variant);

/// CSV audit log: round,node,t,source_id,source,loss.
void write_trace(std::ostream& out, const InterventionDraws& draws, const SampleLibrary& library,
                 std::span<const double> round_losses);

}  // namespace evogood
