#include "evogood/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "evogood/errors.hpp"

namespace evogood {

namespace {

/// 1-based average ranks, ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ContractViolation("auc: scores and labels differ in length");
  double pos = 0, neg = 0;
  for (int l : labels) (l ? pos : neg) += 1.0;
  if (pos == 0 || neg == 0) throw UndefinedMetric("auc needs both positive and negative examples");
  for (double s : scores)
    if (!std::isfinite(s)) throw UndefinedMetric("auc received a non-finite score");
  const auto rank = average_ranks(scores);
  double rank_sum = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i]) rank_sum += rank[i];
  return (rank_sum - pos * (pos + 1) / 2) / (pos * neg);
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw ContractViolation("accuracy: length mismatch");
  if (labels.empty()) throw UndefinedMetric("accuracy of an empty set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

bool FilterRule::matches(const std::string& tag) const {
  return std::find(tags.begin(), tags.end(), tag) != tags.end();
}

FilterRule FilterRule::parse(const std::string& text) {
  FilterRule r;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    r.tags.push_back(item.substr(b, e - b + 1));
  }
  return r;
}

std::string FilterRule::str() const {
  std::string out;
  for (std::size_t i = 0; i < tags.size(); ++i) out += (i ? "," : "") + tags[i];
  return out;
}

OodViews ood_split_links(const DynamicGraph& g, const Provenance& provenance, const FilterRule& rule) {
  OodViews views;
  views.test = g;
  views.train = g;
  if (rule.empty()) return views;

  std::size_t total = 0;
  for (int t = 1; t <= g.num_timestamps(); ++t) {
    std::vector<Edge> kept;
    for (const Edge& e : g.at(t).edges()) {
      ++total;
      if (rule.matches(provenance.tag_of(t, e.u, e.v))) ++views.removed;
      else kept.push_back(e);
    }
    views.train.snapshots[static_cast<std::size_t>(t - 1)] = Snapshot(t, g.node_count, kept, g.at(t).features());
  }
  std::vector<LinkLabel> kept_labels;
  for (const LinkLabel& l : g.labels.links) {
    ++total;
    if (rule.matches(provenance.tag_of(l.t, std::min(l.u, l.v), std::max(l.u, l.v)))) ++views.removed;
    else kept_labels.push_back(l);
  }
  views.train.labels.links = std::move(kept_labels);

  if (total > 0 && views.removed == total)
    throw ConfigError("filter rule `" + rule.str() + "` matches every edge; the training view would be empty");
  if (views.removed == 0) views.warnings.push_back("filter rule `" + rule.str() + "` matched no edges");
  return views;
}

double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

EvalReport report(std::string name, std::string metric, std::vector<std::uint64_t> seeds,
                  std::vector<double> in_values, std::vector<double> ood_values) {
  if (in_values.empty()) throw ContractViolation("report needs at least one seed");
  if (!ood_values.empty() && ood_values.size() != in_values.size())
    throw ContractViolation("report: paired conditions need one value per seed each");
  EvalReport r;
  r.name = std::move(name);
  r.metric = std::move(metric);
  r.seeds = std::move(seeds);
  r.in_values = std::move(in_values);
  r.ood_values = std::move(ood_values);
  r.in_mean = mean(r.in_values);
  r.in_std = sample_std(r.in_values);
  if (r.paired()) {
    r.ood_mean = mean(r.ood_values);
    r.ood_std = sample_std(r.ood_values);
    r.delta = r.in_mean - r.ood_mean;
    r.delta_pct = r.in_mean > 0 ? 100.0 * r.delta / r.in_mean : std::nan("");
  }
  return r;
}

namespace {
std::string fixed2(double x) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << x;
  return s.str();
}
}  // namespace

void write_report_csv(std::ostream& out, std::span<const EvalReport> rows) {
  bool any_paired = false;
  for (const auto& r : rows) any_paired = any_paired || r.paired();
  out << "name,metric,seeds,mean,std";
  if (any_paired) out << ",ood_mean,ood_std,delta,delta_pct";
  out << '\n';
  for (const auto& r : rows) {
    out << r.name << ',' << r.metric << ',' << r.in_values.size() << ',' << format_real(r.in_mean) << ','
        << format_real(r.in_std);
    if (any_paired) {
      if (r.paired())
        out << ',' << format_real(r.ood_mean) << ',' << format_real(r.ood_std) << ',' << format_real(r.delta) << ','
            << fixed2(r.delta_pct);
      else
        out << ",,,,";
    }
    out << '\n';
  }
}

std::string render_report_table(std::span<const EvalReport> rows) {
  bool any_paired = false;
  for (const auto& r : rows) any_paired = any_paired || r.paired();
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"name", "metric", "w/o OOD"};
  if (any_paired) {
    header.push_back("w/ OOD");
    header.push_back("delta");
  }
  cells.push_back(header);
  for (const auto& r : rows) {
    std::vector<std::string> row{r.name, r.metric, fixed2(r.in_mean) + " ± " + fixed2(r.in_std)};
    if (any_paired) {
      row.push_back(r.paired() ? fixed2(r.ood_mean) + " ± " + fixed2(r.ood_std) : "");
      row.push_back(r.paired() ? fixed2(r.delta) + " (" + fixed2(r.delta_pct) + "%)" : "");
    }
    cells.push_back(row);
  }
  // Column widths count code points so the ± sign aligns.
  auto width = [](const std::string& s) {
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80;
    return n;
  };
  std::vector<std::size_t> w(header.size(), 0);
  for (const auto& row : cells)
    for (std::size_t i = 0; i < row.size(); ++i) w[i] = std::max(w[i], width(row[i]));
  std::ostringstream out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t i = 0; i < cells[r].size(); ++i) {
      out << cells[r][i];
      if (i + 1 < cells[r].size()) out << std::string(w[i] - width(cells[r][i]) + 2, ' ');
    }
    out << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t i = 0; i < w.size(); ++i) total += w[i] + (i + 1 < w.size() ? 2 : 0);
      out << std::string(total, '-') << '\n';
    }
  }
  return out.str();
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ContractViolation("spearman needs two equal-length series");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double mx = mean(rx), my = mean(ry);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace evogood
