#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evogood/graph.hpp"
#include "evogood/graph_io.hpp"

namespace evogood {

/// Probability that a random positive outscores a random negative; ties
/// count one half. Labels are 0/1. Throws UndefinedMetric without both classes.
double auc(std::span<const double> scores, std::span<const int> labels);
double accuracy(std::span<const int> predictions, std::span<const int> labels);

/// Edge filter over provenance tags: an edge matches when its tag is listed.
struct FilterRule {
  std::vector<std::string> tags;

  bool empty() const { return tags.empty(); }
  bool matches(const std::string& tag) const;
  /// Comma-separated tag list; the empty string is the empty rule.
  static FilterRule parse(const std::string& text);
  std::string str() const;
};

struct OodViews {
  DynamicGraph train;  // matching edges removed from every snapshot and from link labels
  DynamicGraph test;   // the original graph
  std::size_t removed = 0;
  std::vector<std::string> warnings;
};

/// Throws ConfigError when the rule would remove every edge.
OodViews ood_split_links(const DynamicGraph& g, const Provenance& provenance, const FilterRule& rule);

struct EvalReport {
  std::string name;
  std::string metric;
  std::vector<std::uint64_t> seeds;
  std::vector<double> in_values;   // without OOD (or the only condition)
  std::vector<double> ood_values;  // with OOD; empty when unpaired
  double in_mean = 0, in_std = 0;
  double ood_mean = 0, ood_std = 0;
  double delta = 0, delta_pct = 0;

  bool paired() const { return !ood_values.empty(); }
};

double mean(std::span<const double> xs);
/// Sample standard deviation; 0 for fewer than two values.
double sample_std(std::span<const double> xs);

EvalReport report(std::string name, std::string metric, std::vector<std::uint64_t> seeds,
                  std::vector<double> in_values, std::vector<double> ood_values = {});

void write_report_csv(std::ostream& out, std::span<const EvalReport> rows);
std::string render_report_table(std::span<const EvalReport> rows);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace evogood
