#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "evogood/cli.hpp"
#include "evogood/errors.hpp"
#include "evogood/graph_io.hpp"
#include "evogood/tensor_store.hpp"

namespace evogood::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

fs::path resolve_against(const fs::path& base_dir, const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) path = base_dir / path;
  return fs::weakly_canonical(path);
}

std::string metric_name(TaskKind task) { return task == TaskKind::link ? "auc" : "accuracy"; }

std::string metrics_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,l_task,l_risk,l_svae,l_s,l_d,l_esvae,l_total,val_metric,train_metric\n";
  for (const EpochRecord& r : history)
    out << r.epoch << ',' << format_real(r.l_task) << ',' << format_real(r.l_risk) << ',' << format_real(r.l_svae) << ','
        << format_real(r.l_s) << ',' << format_real(r.l_d) << ',' << format_real(r.l_esvae) << ','
        << format_real(r.l_total) << ',' << format_real(r.val_metric) << ',' << format_real(r.train_metric) << '\n';
  return out.str();
}

TensorStore checkpoint_store(const TrainResult& res, const DynamicGraph& g) {
  TensorStore store;
  const Checkpoint& c = res.best;
  store.meta = {{"epoch", c.epoch},
                {"node_count", g.node_count},
                {"feature_dim", g.feature_dim},
                {"hidden_dim", res.config.encoder.hidden_dim},
                {"num_classes", res.num_classes},
                {"timestamps", g.num_timestamps()},
                {"task", res.config.task_kind == TaskKind::link ? "link" : "node"},
                {"val_metric", c.val_metric},
                {"train_metric", c.train_metric}};
  for (const auto& [name, value] : c.params) store.add(name, value);
  for (std::size_t t = 0; t < c.gates.size(); ++t) store.add("gate." + std::to_string(t + 1), c.gates[t]);
  if (!c.generated.empty()) {
    Matrix rows(static_cast<Eigen::Index>(c.generated.size()), c.generated.front().value.size());
    std::vector<int> ts;
    for (std::size_t i = 0; i < c.generated.size(); ++i) {
      rows.row(static_cast<Eigen::Index>(i)) = c.generated[i].value;
      ts.push_back(c.generated[i].t);
    }
    store.add("generated", rows, {{"t", ts}});
  }
  return store;
}

void write_dataset_file(const fs::path& path, const DynamicGraph& g) {
  std::ostringstream s;
  write_dataset(s, g);
  write_file_atomic(path, s.str());
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

// ---- generate ---------------------------------------------------------------------

GenerateRun cmd_generate(const fs::path& spec_path, const KvConfig& overrides, std::optional<fs::path> out) {
  const auto start = Clock::now();
  KvConfig kv = KvConfig::load(spec_path);
  kv.merge(overrides);
  if (kv.has("base")) kv.set("base", resolve_against(spec_path.parent_path(), kv.require("base")).string());
  GenerateRun run;
  run.data = generate_from_kv(kv);
  const std::uint64_t seed = kv.get_u64("seed", 1);
  run.dir = out ? *out : content_dir(run_root(), "generate", kv, seed);
  fs::create_directories(run.dir);

  write_dataset_file(run.dir / "dataset.evg", run.data.graph);
  std::ostringstream prov;
  write_provenance(prov, run.data.provenance);
  write_file_atomic(run.dir / "provenance.evp", prov.str());
  write_file_atomic(run.dir / "split.cfg", run.data.split.to_string());

  RunManifest m;
  m.command = "generate";
  m.config_path = spec_path.string();
  m.config = kv;
  m.seed = seed;
  m.artifacts = {{"dataset", "dataset.evg"}, {"provenance", "provenance.evp"}, {"split", "split.cfg"}};
  std::size_t edges = 0;
  for (const Snapshot& s : run.data.graph.snapshots) edges += s.edge_count();
  m.extra = {{"warnings", run.data.warnings},
             {"nodes", run.data.graph.node_count},
             {"timestamps", run.data.graph.num_timestamps()},
             {"edges", edges}};
  m.wall_time = seconds_since(start);
  m.save(run.dir);
  return run;
}

// ---- train ------------------------------------------------------------------------

KvConfig resolve_train_kv(const fs::path& config_path, const KvConfig& overrides) {
  KvConfig kv = KvConfig::load(config_path);
  kv.merge(overrides);
  const fs::path base = config_path.parent_path();
  if (kv.has("split_file")) {
    const KvConfig split = KvConfig::load(resolve_against(base, kv.require("split_file")));
    for (const auto& [k, v] : split.entries())
      if (!kv.has(k)) kv.set(k, v);
    kv.erase("split_file");
  }
  for (const char* key : {"dataset", "provenance"})
    if (kv.has(key) && !kv.require(key).empty()) kv.set(key, resolve_against(base, kv.require(key)).string());
  return kv;
}

DatasetViews load_views(const TrainConfig& cfg) {
  if (cfg.dataset.empty()) throw ConfigError("missing required key `dataset`");
  DatasetViews v;
  v.full = load_dataset(cfg.dataset);
  if (cfg.ood_filter.empty()) {
    v.train = v.full;
    return v;
  }
  if (cfg.provenance.empty()) throw ConfigError("ood_filter needs a `provenance` sidecar");
  OodViews views = ood_split_links(v.full, load_provenance(cfg.provenance), FilterRule::parse(cfg.ood_filter));
  v.train = std::move(views.train);
  v.filtered = true;
  v.warnings = std::move(views.warnings);
  return v;
}

TrainRun train_resolved(const KvConfig& kv, const std::string& config_path, std::optional<fs::path> out) {
  const auto start = Clock::now();
  const TrainConfig cfg = TrainConfig::from_kv(kv);
  const DatasetViews views = load_views(cfg);
  TrainRun run;
  run.result = train(views.train, cfg);
  const TrainConfig& resolved = run.result.config;
  const KvConfig resolved_kv = resolved.to_kv();
  run.dir = out ? *out : content_dir(run_root(), "train", resolved_kv, resolved.seed);
  fs::create_directories(run.dir);

  write_file_atomic(run.dir / "config.cfg", resolved_kv.to_string());
  write_file_atomic(run.dir / "metrics.csv", metrics_csv(run.result.history));
  checkpoint_store(run.result, views.train).save(run.dir / "checkpoint.evt");

  RunManifest m;
  m.command = "train";
  m.config_path = config_path;
  m.config = resolved_kv;
  m.seed = resolved.seed;
  m.artifacts = {{"config", "config.cfg"}, {"metrics", "metrics.csv"}, {"checkpoint", "checkpoint.evt"}};
  m.extra = {{"variant", resolved.variant},
             {"best_epoch", run.result.best.epoch},
             {"val_metric", run.result.best.val_metric},
             {"train_metric", run.result.best.train_metric},
             {"node_count", views.train.node_count},
             {"hidden_dim", resolved.encoder.hidden_dim},
             {"warnings", views.warnings}};
  m.wall_time = seconds_since(start);
  m.save(run.dir);
  return run;
}

TrainRun cmd_train(const fs::path& config_path, const KvConfig& overrides, const std::string& ablate,
                   std::optional<fs::path> out) {
  KvConfig kv = resolve_train_kv(config_path, overrides);
  if (!ablate.empty()) {
    TrainConfig probe = TrainConfig::from_kv(kv);
    apply_ablation(probe, ablate);
    const KvConfig ablated = probe.to_kv();
    for (const char* key : {"beta1", "esvae_mode", "variant"}) kv.set(key, ablated.require(key));
  }
  return train_resolved(kv, config_path.string(), std::move(out));
}

// ---- eval -------------------------------------------------------------------------

LoadedModel load_run(const fs::path& run_dir, const DynamicGraph& g) {
  const RunManifest manifest = RunManifest::load(run_dir);
  if (!manifest.artifacts.count("checkpoint")) throw ConfigError(run_dir.string() + " is not a training run");
  const fs::path ckpt = run_dir / manifest.artifacts.at("checkpoint");
  if (!fs::exists(ckpt)) throw ConfigError("missing checkpoint " + ckpt.string());
  const TensorStore store = TensorStore::load(ckpt);

  LoadedModel lm;
  lm.config = TrainConfig::from_kv(manifest.config);
  const int n = store.meta.at("node_count").get<int>();
  const int d = store.meta.at("feature_dim").get<int>();
  const int T = store.meta.at("timestamps").get<int>();
  if (n != g.node_count || d != g.feature_dim || T != g.num_timestamps())
    throw ConfigError("dimension mismatch: checkpoint expects N=" + std::to_string(n) + ", d=" + std::to_string(d) +
                      ", T=" + std::to_string(T) + " but the dataset has N=" + std::to_string(g.node_count) +
                      ", d=" + std::to_string(g.feature_dim) + ", T=" + std::to_string(g.num_timestamps()));
  lm.config.resolve(g);
  lm.model = Model::init(lm.config, store.meta.at("num_classes").get<int>(), lm.config.seed);
  Checkpoint c;
  c.epoch = store.meta.at("epoch").get<int>();
  for (const NamedTensor& t : store.tensors())
    if (t.name.rfind("gate.", 0) != 0 && t.name != "generated") c.params[t.name] = t.value;
  restore_model(lm.model, c);
  for (int t = 1; t <= T; ++t) lm.gates.push_back(store.get("gate." + std::to_string(t)).value);
  lm.epoch = c.epoch;
  return lm;
}

EvalRun cmd_eval(const fs::path& run_dir, const std::string& protocol, std::optional<fs::path> dataset,
                 std::optional<fs::path> out) {
  const auto start = Clock::now();
  static const std::set<std::string> protocols{"train", "val", "test", "ood", "paired"};
  if (!protocols.count(protocol)) throw ConfigError("unknown protocol `" + protocol + "` (train|val|test|ood|paired)");
  const RunManifest train_manifest = RunManifest::load(run_dir);
  TrainConfig cfg = TrainConfig::from_kv(train_manifest.config);
  if (dataset) {
    cfg.dataset = fs::weakly_canonical(*dataset).string();
    cfg.ood_filter.clear();
  }
  const DatasetViews views = load_views(cfg);
  LoadedModel lm = load_run(run_dir, views.train);
  const TrainConfig& rc = lm.config;

  auto metric_on = [&](const DynamicGraph& g, const Range& range) {
    const auto h = representations(g, rc, lm.model);
    return evaluate_range(g, h, lm.gates, rc, lm.model, range).value;
  };
  std::vector<double> in, ood;
  if (protocol == "train") in.push_back(metric_on(views.train, rc.train_range));
  else if (protocol == "val") {
    if (rc.val_range.empty()) throw ConfigError("run has no validation range");
    in.push_back(metric_on(views.train, rc.val_range));
  } else if (protocol == "test") in.push_back(metric_on(views.train, rc.test_range));
  else if (protocol == "ood") in.push_back(metric_on(views.full, rc.test_range));
  else if (views.filtered) {
    in.push_back(metric_on(views.train, rc.test_range));
    ood.push_back(metric_on(views.full, rc.test_range));
  } else {
    in.push_back(metric_on(views.train, rc.train_range));
    ood.push_back(metric_on(views.train, rc.test_range));
  }
  EvalRun run;
  run.report = report(rc.variant, metric_name(rc.task_kind), {rc.seed}, in, ood);

  std::string leaf = "eval-" + protocol;
  if (dataset) leaf += "-" + fnv1a_hex(cfg.dataset).substr(0, 12);
  run.dir = out ? *out : run_dir / leaf;
  fs::create_directories(run.dir);
  std::ostringstream csv;
  write_report_csv(csv, std::span<const EvalReport>(&run.report, 1));
  write_file_atomic(run.dir / "report.csv", csv.str());
  write_file_atomic(run.dir / "report.txt", render_report_table(std::span<const EvalReport>(&run.report, 1)));

  RunManifest m;
  m.command = "eval";
  m.config_path = fs::weakly_canonical(run_dir).string();
  m.config = rc.to_kv();
  m.config.set("protocol", protocol);
  m.seed = rc.seed;
  m.artifacts = {{"report_csv", "report.csv"}, {"report_txt", "report.txt"}};
  m.extra = {{"epoch", lm.epoch}, {"in", in}, {"ood", ood}};
  m.wall_time = seconds_since(start);
  m.save(run.dir);
  return run;
}

// ---- sweep ------------------------------------------------------------------------

GridAxis GridAxis::parse(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("grid axis `" + text + "` must look like key=v1,v2");
  GridAxis a{text.substr(0, eq), split_list(text.substr(eq + 1))};
  if (a.values.empty()) throw ConfigError("grid axis `" + a.key + "` has no values");
  return a;
}

SweepRun cmd_sweep(const fs::path& config_path, const std::vector<GridAxis>& grid,
                   const std::vector<std::uint64_t>& seeds, const KvConfig& overrides, int workers,
                   std::optional<fs::path> out) {
  const auto start = Clock::now();
  const KvConfig base = resolve_train_kv(config_path, overrides);
  for (const GridAxis& a : grid)
    if (!TrainConfig::keys().count(a.key)) throw ConfigError("grid key `" + a.key + "` is not a config key");
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");

  // Cartesian product, last axis fastest.
  std::vector<std::vector<std::string>> cells{{}};
  for (const GridAxis& a : grid) {
    std::vector<std::vector<std::string>> next;
    for (const auto& c : cells)
      for (const auto& v : a.values) {
        auto e = c;
        e.push_back(v);
        next.push_back(std::move(e));
      }
    cells = std::move(next);
  }

  KvConfig keyed = base;
  std::string grid_text, seed_text;
  for (const GridAxis& a : grid) {
    grid_text += a.key + "=";
    for (const auto& v : a.values) grid_text += v + ",";
    grid_text += ";";
  }
  for (auto s : seeds) seed_text += std::to_string(s) + ",";
  keyed.set("sweep.grid", grid_text);
  keyed.set("sweep.seeds", seed_text);
  SweepRun run;
  run.dir = out ? *out : content_dir(run_root(), "sweep", keyed, seeds.front());
  fs::create_directories(run.dir);

  struct Job {
    std::size_t cell;
    std::uint64_t seed;
    std::string child;
    bool ok = false;
    std::string error;
    double val = 0, test = 0;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (auto s : seeds) jobs.push_back({c, s, "cell-" + std::to_string(c + 1) + "-s" + std::to_string(s), false, "", 0, 0});

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      Job& job = jobs[i];
      try {
        KvConfig kv = base;
        for (std::size_t a = 0; a < grid.size(); ++a) kv.set(grid[a].key, cells[job.cell][a]);
        kv.set("seed", std::to_string(job.seed));
        const TrainRun tr = train_resolved(kv, config_path.string(), run.dir / job.child);
        job.val = tr.result.best.val_metric;
        job.test = cmd_eval(run.dir / job.child, "test").report.in_mean;
        job.ok = true;
      } catch (const std::exception& e) {
        job.error = e.what();
      }
    }
  };
  const int pool = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  std::vector<std::thread> threads;
  for (int w = 0; w < pool; ++w) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  std::ostringstream csv;
  for (const GridAxis& a : grid) csv << a.key << ',';
  csv << "seeds,ok,val_mean,val_std,test_mean,test_std\n";
  nlohmann::json children = nlohmann::json::array();
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::vector<double> val, test;
    for (const Job& j : jobs) {
      if (j.cell != c) continue;
      children.push_back({{"dir", j.child}, {"seed", j.seed}, {"ok", j.ok}, {"error", j.error}});
      if (!j.ok) {
        ++run.failures;
        continue;
      }
      val.push_back(j.val);
      test.push_back(j.test);
    }
    for (const auto& v : cells[c]) csv << v << ',';
    csv << seeds.size() << ',' << val.size() << ',' << format_real(mean(val)) << ',' << format_real(sample_std(val))
        << ',' << format_real(mean(test)) << ',' << format_real(sample_std(test)) << '\n';
  }
  run.children = static_cast<int>(jobs.size());
  write_file_atomic(run.dir / "summary.csv", csv.str());

  RunManifest m;
  m.command = "sweep";
  m.config_path = config_path.string();
  m.config = keyed;
  m.seed = seeds.front();
  m.artifacts = {{"summary", "summary.csv"}};
  m.extra = {{"children", children}, {"failures", run.failures}, {"workers", pool}};
  m.wall_time = seconds_since(start);
  m.save(run.dir);
  return run;
}

// ---- validate ---------------------------------------------------------------------

std::size_t cmd_validate(const fs::path& dataset, std::ostream& out) {
  const DynamicGraph g = load_dataset(dataset);
  const auto problems = validate(g);
  for (const Violation& v : problems) {
    out << v.kind << " t=" << v.t;
    if (v.node >= 0) out << " node=" << v.node;
    if (v.other >= 0) out << " other=" << v.other;
    out << ": " << v.message << '\n';
  }
  if (problems.empty())
    out << "ok: N=" << g.node_count << " T=" << g.num_timestamps() << " d=" << g.feature_dim << '\n';
  return problems.size();
}

// ---- entry point ------------------------------------------------------------------

namespace {

/// `--key value` and `--key=value` pairs left over after the named options.
KvConfig parse_overrides(const std::vector<std::string>& rest) {
  KvConfig kv;
  for (std::size_t i = 0; i < rest.size(); ++i) {
    const std::string& arg = rest[i];
    if (arg.rfind("--", 0) != 0 || arg.size() < 3) throw ConfigError("unexpected argument `" + arg + "`");
    std::string key = arg.substr(2), value;
    const auto eq = key.find('=');
    if (eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= rest.size()) throw ConfigError("flag `" + arg + "` needs a value");
      value = rest[++i];
    }
    std::replace(key.begin(), key.end(), '-', '_');
    kv.set(key, value);
  }
  return kv;
}

std::optional<fs::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Environment-aware dynamic graph learning under distribution shift"};
  app.require_subcommand(1);
  std::string spec, config, run_dir, dataset, out_dir, protocol = "test", ablate, seeds_text = "1,2,3,4,5";
  std::vector<std::string> grid_text;
  int workers = 1;

  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset from a spec file");
  gen->add_option("spec", spec, "Spec file")->required();
  gen->add_option("--out", out_dir, "Output directory");
  gen->allow_extras();

  auto* tr = app.add_subcommand("train", "Train a model from a config file");
  tr->add_option("config", config, "Config file")->required();
  tr->add_option("--ablate", ablate, "no-intervention | no-esvae");
  tr->add_option("--out", out_dir, "Output directory");
  tr->allow_extras();

  auto* ev = app.add_subcommand("eval", "Evaluate a trained run");
  ev->add_option("run", run_dir, "Training run directory")->required();
  ev->add_option("--protocol", protocol, "train | val | test | ood | paired");
  ev->add_option("--dataset", dataset, "Evaluate on another dataset file");
  ev->add_option("--out", out_dir, "Output directory");

  auto* sw = app.add_subcommand("sweep", "Grid sweep over config keys and seeds");
  sw->add_option("config", config, "Config file")->required();
  sw->add_option("--grid", grid_text, "key=v1,v2 (repeatable)");
  sw->add_option("--seeds", seeds_text, "Comma-separated seeds (default 1-5)");
  sw->add_option("--workers", workers, "Worker threads");
  sw->add_option("--out", out_dir, "Output directory");
  sw->allow_extras();

  auto* va = app.add_subcommand("validate", "Check a dataset file");
  va->add_option("dataset", dataset, "Dataset file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (gen->parsed()) {
      const auto r = cmd_generate(spec, parse_overrides(gen->remaining()), opt_path(out_dir));
      out << r.dir.string() << '\n';
      if (r.data.warnings) err << "warning: " << r.data.warnings << " edge probabilities clipped to 1\n";
    } else if (tr->parsed()) {
      const auto r = cmd_train(config, parse_overrides(tr->remaining()), ablate, opt_path(out_dir));
      out << r.dir.string() << '\n'
          << "best epoch " << r.result.best.epoch << " val " << format_real(r.result.best.val_metric) << '\n';
    } else if (ev->parsed()) {
      const auto r = cmd_eval(run_dir, protocol, opt_path(dataset), opt_path(out_dir));
      out << r.dir.string() << '\n' << render_report_table(std::span<const EvalReport>(&r.report, 1));
    } else if (sw->parsed()) {
      std::vector<GridAxis> grid;
      for (const auto& g : grid_text) grid.push_back(GridAxis::parse(g));
      std::vector<std::uint64_t> seeds;
      for (const auto& s : split_list(seeds_text)) {
        try {
          seeds.push_back(std::stoull(s));
        } catch (const std::logic_error&) {
          throw ConfigError("bad seed `" + s + "`");
        }
      }
      const auto r = cmd_sweep(config, grid, seeds, parse_overrides(sw->remaining()), workers, opt_path(out_dir));
      out << r.dir.string() << '\n' << r.children << " runs, " << r.failures << " failed\n";
      if (r.failures) return 2;
    } else if (va->parsed()) {
      return cmd_validate(dataset, out) == 0 ? 0 : 1;
    }
    return 0;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
  } catch (const IndexError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const UndefinedMetric& e) {
    err << "error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace evogood::cli
