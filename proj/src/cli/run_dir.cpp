#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "evogood/cli.hpp"
#include "evogood/errors.hpp"

namespace evogood::cli {

fs::path run_root() {
  const char* env = std::getenv("EVOGOOD_RUN_ROOT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

fs::path content_dir(const fs::path& root, const std::string& command, const KvConfig& config, std::uint64_t seed) {
  KvConfig keyed = config;
  keyed.erase("seed");
  return root / (command + "-" + keyed.hash().substr(0, 12) + "-s" + std::to_string(seed));
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["config_path"] = config_path;
  j["config"] = config.entries();
  j["seed"] = seed;
  j["artifacts"] = artifacts;
  j["tool_version"] = tool_version;
  j["wall_time"] = wall_time;
  j["extra"] = extra;
  return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config_path = j.value("config_path", "");
  for (const auto& [k, v] : j.at("config").items()) m.config.set(k, v.get<std::string>());
  m.seed = j.value("seed", std::uint64_t{0});
  m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
  m.tool_version = j.value("tool_version", "");
  m.wall_time = j.value("wall_time", 0.0);
  m.extra = j.value("extra", nlohmann::json::object());
  return m;
}

void RunManifest::save(const fs::path& dir) const { write_file_atomic(dir / "manifest.json", to_json().dump(2) + "\n"); }

RunManifest RunManifest::load(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ConfigError("no manifest.json in " + dir.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed manifest in " + dir.string() + ": " + e.what());
  }
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out << bytes;
    if (!out.flush()) throw ConfigError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::vector<fs::path> orphan_files(const fs::path& dir) {
  std::set<fs::path> listed;
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path p = fs::weakly_canonical(entry.path());
    files.push_back(p);
    if (entry.path().filename() != "manifest.json") continue;
    listed.insert(p);
    const fs::path owner = entry.path().parent_path();
    for (const auto& [role, rel] : RunManifest::load(owner).artifacts) listed.insert(fs::weakly_canonical(owner / rel));
  }
  std::vector<fs::path> orphans;
  for (const auto& f : files)
    if (!listed.count(f)) orphans.push_back(f);
  return orphans;
}

}  // namespace evogood::cli
