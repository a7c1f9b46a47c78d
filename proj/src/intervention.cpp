#include "evogood/intervention.hpp"

#include <algorithm>
#include <map>
#include <ostream>

#include "evogood/errors.hpp"
#include "evogood/graph_io.hpp"

namespace evogood {

void InterventionConfig::check() const {
  if (rounds < 2) throw ConfigError("intervention rounds must be >= 2 for a defined variance");
  if (ratio <= 0 || ratio > 1) throw ConfigError("intervention ratio must lie in (0, 1]");
  if (gen_fraction < 0 || gen_fraction > 1) throw ConfigError("gen_fraction must lie in [0, 1]");
}

const LibrarySample& SampleLibrary::at(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= size()) throw IndexError("library id " + std::to_string(id));
  const auto i = static_cast<std::size_t>(id);
  return i < observed.size() ? observed[i] : generated[i - observed.size()];
}

void SampleLibrary::set_generated(const std::vector<TaggedVector>& samples) {
  generated.clear();
  generated.reserve(samples.size());
  for (const TaggedVector& s : samples) {
    if (!s.value.allFinite()) throw NumericalError("non-finite generated sample at t=" + std::to_string(s.t));
    generated.push_back({s.value, s.t, SampleSource::generated, -1});
  }
}

SampleLibrary build_observed_library(const NodeRepresentationSequence& h) {
  SampleLibrary lib;
  lib.observed.reserve(static_cast<std::size_t>(h.timestamps() * h.node_count()));
  for (int t = 1; t <= h.timestamps(); ++t)
    for (int v = 0; v < h.node_count(); ++v) lib.observed.push_back({h.at(t).row(v), t, SampleSource::observed, v});
  return lib;
}

InterventionDraws draw_interventions(const SampleLibrary& library, const InterventionPlan& plan,
                                     const InterventionConfig& cfg, std::mt19937_64& rng) {
  if (library.empty()) throw ConfigError("intervention library is empty");
  if (plan.rounds < 2) throw ConfigError("intervention rounds must be >= 2 for a defined variance");

  const int n_obs = static_cast<int>(library.observed.size());
  const int n_gen = static_cast<int>(library.generated.size());
  std::map<int, std::vector<int>> obs_by_t, gen_by_t;
  if (cfg.match_timestamp) {
    for (int i = 0; i < n_obs; ++i) obs_by_t[library.observed[static_cast<std::size_t>(i)].t].push_back(i);
    for (int i = 0; i < n_gen; ++i) gen_by_t[library.generated[static_cast<std::size_t>(i)].t].push_back(n_obs + i);
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick = [&](int t) {
    const bool use_gen = unit(rng) < cfg.gen_fraction;
    if (!cfg.match_timestamp) {
      if ((use_gen && n_gen > 0) || n_obs == 0)
        return n_obs + std::uniform_int_distribution<int>(0, n_gen - 1)(rng);
      return std::uniform_int_distribution<int>(0, n_obs - 1)(rng);
    }
    const auto& g = gen_by_t[t];
    const auto& o = obs_by_t[t];
    const auto& pool = ((use_gen && !g.empty()) || o.empty()) ? g : o;
    if (pool.empty()) throw ConfigError("no library sample at t=" + std::to_string(t));
    return pool[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, static_cast<int>(pool.size()) - 1)(rng))];
  };

  const auto count = static_cast<std::size_t>(std::max<double>(
      plan.targets.empty() ? 0.0 : 1.0, std::round(cfg.ratio * static_cast<double>(plan.targets.size()))));
  InterventionDraws draws;
  for (int r = 0; r < plan.rounds; ++r) {
    InterventionDraws::Round round;
    if (count >= plan.targets.size()) {
      round.targets = plan.targets;
    } else {
      std::vector<std::size_t> idx(plan.targets.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(count);
      std::sort(idx.begin(), idx.end());
      for (std::size_t i : idx) round.targets.push_back(plan.targets[i]);
    }
    round.sources.reserve(round.targets.size());
    for (const auto& tg : round.targets) round.sources.push_back(pick(tg.t));
    draws.rounds.push_back(std::move(round));
  }
  return draws;
}

RowVector intervene(const RowVector& h, const std::vector<int>& p_v, const RowVector& s) {
  if (s.size() != h.size()) throw ContractViolation("replacement dimension does not match h");
  RowVector out = h;
  for (int j : p_v) {
    if (j < 0 || j >= h.size()) throw ContractViolation("variant index " + std::to_string(j) + " out of range");
    out(j) = s(j);
  }
  return out;
}

double population_variance(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  // Shift by the first value so that identical inputs give exactly zero.
  const double x0 = xs.front();
  double mean = 0.0;
  for (double x : xs) mean += x - x0;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - x0 - mean) * (x - x0 - mean);
  return var / static_cast<double>(xs.size());
}

ad::Var population_variance(std::span<const ad::Var> scalars) {
  if (scalars.empty()) throw ContractViolation("variance of an empty set");
  ad::Var col = ad::concat_rows(scalars);  // S x 1
  ad::Var shifted = ad::add_row(col, ad::scale(ad::slice_rows(col, 0, 1), -1.0));
  ad::Var centered = ad::add_row(shifted, ad::scale(ad::mean(shifted), -1.0));
  return ad::mean(ad::square(centered));
}

std::vector<RoundEdit> round_edits(const InterventionDraws::Round& round, const SampleLibrary& library,
                                   const std::vector<Eigen::MatrixXi>& variant, int node_count, int dim) {
  const int T = static_cast<int>(variant.size());
  std::vector<RoundEdit> edits(static_cast<std::size_t>(T),
                               RoundEdit{Matrix::Ones(node_count, dim), Matrix::Zero(node_count, dim)});
  for (std::size_t i = 0; i < round.targets.size(); ++i) {
    const auto& tg = round.targets[i];
    if (tg.t < 1 || tg.t > T || tg.node < 0 || tg.node >= node_count)
      throw ContractViolation("intervention target out of range");
    const LibrarySample& s = library.at(round.sources[i]);
    const Eigen::MatrixXi& var = variant[static_cast<std::size_t>(tg.t - 1)];
    RoundEdit& e = edits[static_cast<std::size_t>(tg.t - 1)];
    for (int j = 0; j < dim; ++j) {
      if (var(tg.node, j)) {
        e.keep(tg.node, j) = 0.0;
        e.replace(tg.node, j) = s.value(j);
      }
    }
  }
  return edits;
}

RiskResult risk_loss(const TaskLossFn& task_loss, const std::vector<ad::Var>& h, const SampleLibrary& library,
                     const InterventionDraws& draws, const std::vector<Eigen::MatrixXi>& variant) {
  if (library.empty()) throw ConfigError("intervention library is empty");
  if (draws.rounds.size() < 2) throw ConfigError("risk loss needs at least two rounds");
  if (variant.size() != h.size()) throw ContractViolation("variant indicators must cover every timestamp");
  RiskResult out;
  const int n = static_cast<int>(h.front().rows()), d = static_cast<int>(h.front().cols());
  for (const auto& round : draws.rounds) {
    auto edits = round_edits(round, library, variant, n, d);
    std::vector<ad::Var> hp;
    hp.reserve(h.size());
    for (std::size_t t = 0; t < h.size(); ++t) {
      const RoundEdit& e = edits[t];
      if ((e.keep.array() == 1.0).all()) hp.push_back(h[t]);
      else hp.push_back(ad::add_const(ad::mul_const(h[t], e.keep), e.replace));
    }
    out.round_losses.push_back(task_loss(hp));
  }
  out.risk = population_variance(out.round_losses);
  return out;
}

double risk_loss(const std::function<double(const std::vector<Matrix>&)>& task_loss, const NodeRepresentationSequence& h,
                 const SampleLibrary& library, const InterventionDraws& draws,
                 const std::vector<Eigen::MatrixXi>& variant) {
  if (library.empty()) throw ConfigError("intervention library is empty");
  if (draws.rounds.size() < 2) throw ConfigError("risk loss needs at least two rounds");
  std::vector<double> losses;
  for (const auto& round : draws.rounds) {
    auto edits = round_edits(round, library, variant, h.node_count(), h.dim());
    std::vector<Matrix> hp;
    for (std::size_t t = 0; t < h.values.size(); ++t)
      hp.push_back(h.values[t].cwiseProduct(edits[t].keep) + edits[t].replace);
    losses.push_back(task_loss(hp));
  }
  return population_variance(losses);
}

void write_trace(std::ostream& out, const InterventionDraws& draws, const SampleLibrary& library,
                 std::span<const double> round_losses) {
  out << "round,node,t,source_id,source,loss\n";
  for (std::size_t r = 0; r < draws.rounds.size(); ++r) {
    const auto& round = draws.rounds[r];
    const std::string loss = r < round_losses.size() ? format_real(round_losses[r]) : "";
    for (std::size_t i = 0; i < round.targets.size(); ++i) {
      const int id = round.sources[i];
      out << r << ',' << round.targets[i].node << ',' << round.targets[i].t << ',' << id << ','
          << (library.at(id).source == SampleSource::observed ? "observed" : "generated") << ',' << loss << '\n';
    }
  }
}

}  // namespace evogood
