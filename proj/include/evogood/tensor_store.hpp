#pragma once

// Named-tensor container used for checkpoints and sample libraries.
//
//   bytes 0..3   magic "EVT1"
//   bytes 4..7   u32 format version (1), little-endian
//   bytes 8..15  u64 manifest length L, little-endian
//   next L bytes UTF-8 JSON manifest:
//                {"meta": {...}, "tensors": [{"name", "shape": [r, c], "dtype": "f64",
//                 "offset", "meta"}]}
//   remainder    tensor payloads, row-major IEEE-754 f64 little-endian; offsets
//                are relative to the start of this region.

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace evogood {

struct NamedTensor {
  std::string name;
  Eigen::MatrixXd value;
  nlohmann::json meta = nlohmann::json::object();
};

class TensorStore {
 public:
  nlohmann::json meta = nlohmann::json::object();

  void add(const std::string& name, const Eigen::MatrixXd& value, nlohmann::json tensor_meta = nlohmann::json::object());
  bool has(const std::string& name) const;
  const NamedTensor& get(const std::string& name) const;  // throws ConfigError when missing
  const std::vector<NamedTensor>& tensors() const { return tensors_; }

  void save(const std::filesystem::path& path) const;
  static TensorStore load(const std::filesystem::path& path);

 private:
  std::vector<NamedTensor> tensors_;
};

}  // namespace evogood
