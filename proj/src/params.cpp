#include "mmcl/params.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace mmcl {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'C', 'K'};
constexpr std::uint32_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ContractError("checkpoint: truncated file");
  return v;
}

}  // namespace

Parameter& ParameterStore::create(const std::string& name, Shape shape,
                                  bool trainable) {
  auto [it, inserted] = params_.try_emplace(name);
  if (!inserted) throw ContractError("parameter name already in use: " + name);
  it->second = Parameter{name, Tensor(std::move(shape)), trainable};
  return it->second;
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("no such parameter: " + name);
  return it->second;
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("no such parameter: " + name);
  return it->second;
}

bool ParameterStore::contains(const std::string& name) const {
  return params_.count(name) > 0;
}

void ParameterStore::watch_all(Tape& tape) {
  for (auto& [name, p] : params_) {
    if (p.trainable) tape.watch(p.tensor);
  }
}

void ParameterStore::zero_grads() {
  for (auto& [name, p] : params_) p.tensor.zero_grad();
}

std::size_t ParameterStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.tensor.numel();
  return n;
}

void ParameterStore::save(const std::filesystem::path& path) const {
  std::map<std::string, Tensor> named;
  for (const auto& [name, p] : params_) named.emplace(name, p.tensor);
  save_named_tensors(path, named);
}

void ParameterStore::load(const std::filesystem::path& path) {
  std::map<std::string, Tensor> named = load_named_tensors(path);
  if (named.size() != params_.size()) {
    throw ContractError("checkpoint: expected " + std::to_string(params_.size()) +
                        " parameters, file has " + std::to_string(named.size()));
  }
  for (auto& [name, p] : params_) {
    auto it = named.find(name);
    if (it == named.end()) throw ContractError("checkpoint: missing parameter " + name);
    if (it->second.shape() != p.tensor.shape()) {
      throw ContractError("checkpoint: shape mismatch for " + name);
    }
    p.tensor.values() = it->second.values();
  }
}

void save_named_tensors(const std::filesystem::path& path,
                        const std::map<std::string, Tensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ContractError("checkpoint: cannot open for write: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kFormatVersion);
  write_pod(out, static_cast<std::uint64_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {  // std::map: ascending name order
    write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, static_cast<std::uint32_t>(t.rank()));
    for (int d = 0; d < t.rank(); ++d) write_pod(out, static_cast<std::uint32_t>(t.dim(d)));
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!out) throw ContractError("checkpoint: write failed: " + path.string());
}

std::map<std::string, Tensor> load_named_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("checkpoint: cannot open for read: " + path.string());
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ContractError("checkpoint: bad magic in " + path.string());
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kFormatVersion) {
    throw ContractError("checkpoint: unsupported format version " +
                        std::to_string(version));
  }
  const auto count = read_pod<std::uint64_t>(in);
  std::map<std::string, Tensor> tensors;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rank = read_pod<std::uint32_t>(in);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<int>(read_pod<std::uint32_t>(in)));
    }
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.values().data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!in) throw ContractError("checkpoint: truncated payload for " + name);
    tensors.emplace(std::move(name), std::move(t));
  }
  return tensors;
}

void fill_uniform(Tensor& t, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.values()) v = dist(rng);
}

void init_linear(Tensor& t, std::mt19937_64& rng, int fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  fill_uniform(t, rng, -bound, bound);
}

}  // namespace mmcl
