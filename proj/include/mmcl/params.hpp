#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <string>

#include "mmcl/tensor.hpp"

namespace mmcl {

struct Parameter {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

/// Named parameters with deterministic (lexicographic) iteration order.
class ParameterStore {
public:
  Parameter& create(const std::string& name, Shape shape, bool trainable = true);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t size() const { return params_.size(); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void watch_all(Tape& tape);
  void zero_grads();
  std::size_t total_elements() const;

  void save(const std::filesystem::path& path) const;
  /// Loads values into existing parameters; names and shapes must match.
  void load(const std::filesystem::path& path);

private:
  std::map<std::string, Parameter> params_;
};

/// Checkpoint container format, also used for prediction snapshots:
/// a version tag followed by (name length, name bytes, rank, shape,
/// little-endian 64-bit payload) per tensor in ascending name order.
void save_named_tensors(const std::filesystem::path& path,
                        const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> load_named_tensors(const std::filesystem::path& path);

void fill_uniform(Tensor& t, std::mt19937_64& rng, double lo, double hi);

/// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
void init_linear(Tensor& t, std::mt19937_64& rng, int fan_in);

}  // namespace mmcl
