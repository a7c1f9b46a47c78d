#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "evogood/evaluation.hpp"
#include "evogood/kv_config.hpp"
#include "evogood/synthetic.hpp"
#include "evogood/training.hpp"

namespace evogood::cli {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "0.1.0";

// ---- run directories -------------------------------------------------------------

/// EVOGOOD_RUN_ROOT, or ./runs when unset.
fs::path run_root();

/// <root>/<command>-<hash of config without seed>-s<seed>
fs::path content_dir(const fs::path& root, const std::string& command, const KvConfig& config, std::uint64_t seed);

struct RunManifest {
  std::string command;
  std::string config_path;
  KvConfig config;  // resolved, self-contained
  std::uint64_t seed = 0;
  std::map<std::string, std::string> artifacts;  // role -> path relative to the run dir
  std::string tool_version = kToolVersion;
  double wall_time = 0;  // seconds
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  void save(const fs::path& dir) const;  // dir/manifest.json
  static RunManifest load(const fs::path& dir);
};

/// Write through a temporary sibling and rename, so readers never see a partial file.
void write_file_atomic(const fs::path& path, const std::string& bytes);

/// Files under `dir` (recursively) not listed by any manifest found in the tree.
std::vector<fs::path> orphan_files(const fs::path& dir);

// ---- commands ----------------------------------------------------------------------

struct GenerateRun {
  fs::path dir;
  SyntheticDataset data;
};
/// Spec file merged with overrides; writes dataset.evg, provenance.evp, split.cfg, manifest.json.
GenerateRun cmd_generate(const fs::path& spec_path, const KvConfig& overrides, std::optional<fs::path> out = {});

/// Training config keys outside TrainConfig: `split_file` names a key-value
/// file (such as a generated split.cfg) whose entries fill keys the config
/// leaves unset. Relative `dataset`, `provenance` and `split_file` paths are
/// resolved against the config file's directory.
KvConfig resolve_train_kv(const fs::path& config_path, const KvConfig& overrides);

struct TrainRun {
  fs::path dir;
  TrainResult result;
};
/// Writes config.cfg, metrics.csv, checkpoint.evt and manifest.json.
TrainRun cmd_train(const fs::path& config_path, const KvConfig& overrides, const std::string& ablate = "",
                   std::optional<fs::path> out = {});
/// Same as cmd_train for an already resolved key-value config.
TrainRun train_resolved(const KvConfig& kv, const std::string& config_path, std::optional<fs::path> out = {});

/// Views used by a run: the training graph (filtered when ood_filter is set) and the full graph.
struct DatasetViews {
  DynamicGraph train;
  DynamicGraph full;
  bool filtered = false;
  std::vector<std::string> warnings;
};
DatasetViews load_views(const TrainConfig& cfg);

struct LoadedModel {
  TrainConfig config;
  Model model;
  std::vector<Matrix> gates;
  int epoch = 0;
};
/// Restore a trained run. Throws ConfigError with an explicit dimension
/// message when the dataset does not match the checkpoint.
LoadedModel load_run(const fs::path& run_dir, const DynamicGraph& g);

/// protocol: train | val | test | ood | paired.
///   train/val/test  metric on that range of the training view
///   ood             test range of the unfiltered graph
///   paired          with a filter: test range filtered (w/o OOD) vs unfiltered (w/ OOD);
///                   without one: train range (w/o OOD) vs test range (w/ OOD)
struct EvalRun {
  fs::path dir;
  EvalReport report;
};
EvalRun cmd_eval(const fs::path& run_dir, const std::string& protocol, std::optional<fs::path> dataset = {},
                 std::optional<fs::path> out = {});

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
  static GridAxis parse(const std::string& text);  // key=v1,v2,...
};

struct SweepRun {
  fs::path dir;
  int children = 0;
  int failures = 0;
};
/// Cartesian grid x seeds; each child is a train run followed by a test
/// evaluation. summary.csv holds one row per grid cell.
SweepRun cmd_sweep(const fs::path& config_path, const std::vector<GridAxis>& grid,
                   const std::vector<std::uint64_t>& seeds, const KvConfig& overrides, int workers = 1,
                   std::optional<fs::path> out = {});

/// Prints violations; returns their count.
std::size_t cmd_validate(const fs::path& dataset, std::ostream& out);

/// Entry point used by the executable. Exit codes: 0 ok, 1 user error, 2 internal error.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace evogood::cli
