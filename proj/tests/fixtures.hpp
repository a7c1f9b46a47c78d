#pragma once

// Training fixtures shared by the unit tests and the acceptance runner.

#include <string>
#include <vector>

#include "evogood/training.hpp"
#include "testing.hpp"

namespace evogood::testing {

/// Six nodes, three snapshots, with labels for the requested task.
inline DynamicGraph tiny_graph(std::uint64_t seed, TaskKind task) {
  std::mt19937_64 rng(seed);
  const LabelKind kind = task == TaskKind::link ? LabelKind::link_occurrence : LabelKind::node_class;
  // Redraw until every snapshot leaves room for one negative per positive.
  for (;;) {
    DynamicGraph g = random_graph(rng, 6, 3, 4, 0.4, kind, 3);
    bool sparse = true;
    for (int t = 1; t <= g.num_timestamps() + (kind == LabelKind::link_occurrence); ++t)
      sparse = sparse && g.edges_at(t).size() <= 7;
    if (sparse) return g;
  }
}

inline TrainConfig tiny_config(TaskKind task) {
  TrainConfig cfg;
  cfg.task = task == TaskKind::link ? "link" : "node";
  cfg.epochs = 3;
  cfg.lr = 0.01;
  cfg.encoder.hidden_dim = 6;
  cfg.encoder.heads = 2;
  cfg.encoder.activation = Activation::tanh;
  cfg.esvae.static_dim = 3;
  cfg.esvae.dynamic_dim = 3;
  cfg.esvae.decoder_hidden = 5;
  cfg.esvae.clusters = 3;
  cfg.esvae.top_k = 1;
  cfg.esvae.kmeans_restarts = 2;
  cfg.invariance.delta = 0.5;
  cfg.intervention.gen_fraction = 0.5;
  cfg.intervention.generated_count = 4;
  cfg.train_range = {1, 3};
  cfg.val_range = {1, 0};
  cfg.test_range = {1, 0};
  return cfg;
}

struct GradientReport {
  std::string term;
  FdResult fd;
  double value = 0;
};

/// Central-difference check of every loss term over all trainable parameters
/// with the epoch context (noise, pseudo labels, library, draws) frozen.
inline std::vector<GradientReport> gradient_suite(TaskKind task, std::uint64_t seed) {
  DynamicGraph g = tiny_graph(seed, task);
  TrainConfig cfg = tiny_config(task);
  cfg.seed = seed;
  cfg.resolve(g);
  Model model = Model::init(cfg, g.labels.num_classes, seed);
  GraphTopology topo(g);
  NodeRepresentationSequence h = representations(g, cfg, model);
  EpochContext ctx = build_context(g, h, cfg, model, derive_seed(seed, 100, 0));
  const std::vector<ad::Parameter*> params = model.all();

  using Pick = ad::Var (*)(const LossTerms&);
  const std::pair<const char*, Pick> terms[] = {
      {"task", [](const LossTerms& l) { return l.task; }},
      {"risk", [](const LossTerms& l) { return l.risk; }},
      {"svae", [](const LossTerms& l) { return l.esvae.svae; }},
      {"l_s", [](const LossTerms& l) { return l.esvae.l_s; }},
      {"l_d", [](const LossTerms& l) { return l.esvae.l_d; }},
      {"total", [](const LossTerms& l) { return l.total; }},
  };
  std::vector<GradientReport> out;
  for (const auto& [name, pick] : terms) {
    GradientReport r;
    r.term = name;
    {
      ad::Tape tape(false);
      r.value = pick(forward(tape, g, topo, cfg, model, ctx)).scalar();
    }
    r.fd = finite_difference(params, [&](ad::Tape& tape) { return pick(forward(tape, g, topo, cfg, model, ctx)); });
    out.push_back(r);
  }
  return out;
}

}  // namespace evogood::testing
