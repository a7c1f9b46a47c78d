#include "evogood/tensor_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "evogood/errors.hpp"

namespace evogood {

namespace {

constexpr char kMagic[4] = {'E', 'V', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put_le(std::ostream& out, T value) {
  unsigned char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  unsigned char b[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) throw ConfigError("truncated tensor container header");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& out, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, sizeof bits);
  put_le<std::uint64_t>(out, bits);
}

double from_le_bytes(const unsigned char* b) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double x;
  std::memcpy(&x, &bits, sizeof x);
  return x;
}

}  // namespace

void TensorStore::add(const std::string& name, const Eigen::MatrixXd& value, nlohmann::json tensor_meta) {
  for (auto& t : tensors_)
    if (t.name == name) {
      t.value = value;
      t.meta = std::move(tensor_meta);
      return;
    }
  tensors_.push_back({name, value, std::move(tensor_meta)});
}

bool TensorStore::has(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return true;
  return false;
}

const NamedTensor& TensorStore::get(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return t;
  throw ConfigError("tensor `" + name + "` not found in container");
}

void TensorStore::save(const std::filesystem::path& path) const {
  nlohmann::json manifest;
  manifest["meta"] = meta;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors_) {
    manifest["tensors"].push_back({{"name", t.name},
                                   {"shape", {t.value.rows(), t.value.cols()}},
                                   {"dtype", "f64"},
                                   {"offset", offset},
                                   {"meta", t.meta}});
    offset += static_cast<std::uint64_t>(t.value.size()) * 8;
  }
  const std::string text = manifest.dump();

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out.write(kMagic, 4);
    put_le<std::uint32_t>(out, kVersion);
    put_le<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : tensors_)
      for (Eigen::Index i = 0; i < t.value.rows(); ++i)
        for (Eigen::Index j = 0; j < t.value.cols(); ++j) put_f64(out, t.value(i, j));
    if (!out) throw ConfigError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

TensorStore TensorStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open tensor container " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw ConfigError(path.string() + " is not an EVT1 tensor container");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kVersion) throw ConfigError("unsupported tensor container version " + std::to_string(version));
  const auto len = get_le<std::uint64_t>(in);
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw ConfigError("truncated tensor manifest");
  nlohmann::json manifest = nlohmann::json::parse(text);
  std::vector<unsigned char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  TensorStore store;
  store.meta = manifest.value("meta", nlohmann::json::object());
  for (const auto& entry : manifest.at("tensors")) {
    if (entry.at("dtype") != "f64") throw ConfigError("unsupported dtype " + entry.at("dtype").dump());
    const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
    const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    if (offset + static_cast<std::uint64_t>(rows * cols) * 8 > payload.size())
      throw ConfigError("tensor `" + entry.at("name").get<std::string>() + "` exceeds payload");
    Eigen::MatrixXd m(rows, cols);
    const unsigned char* p = payload.data() + offset;
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j, p += 8) m(i, j) = from_le_bytes(p);
    store.tensors_.push_back({entry.at("name").get<std::string>(), std::move(m),
                              entry.value("meta", nlohmann::json::object())});
  }
  return store;
}

}  // namespace evogood
