#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mmcl/errors.hpp"

namespace mmcl {

/// Training/model configuration. File form is flat key=value lines ('#'
/// starts a comment); unknown keys are an error so ablation scripts fail
/// loudly on typos.
struct TrainConfig {
  int batch_size = 16;
  int embed_dim = 128;
  int lstm_hidden = 256;
  int heads = 4;
  int gat_layers = 2;
  double tau = 2.0;
  double label_smoothing = 0.1;
  double learning_rate = 3e-3;
  int max_epochs = 50;
  int patience = 3;
  std::uint64_t seed = 1;
  double dropout = 0.4;
  double vote_threshold = 0.5;
  int knn_k = 4;
  int negatives_per_anchor = 8;
  int slot_window = 2;
  bool gat_elu = false;
  bool gat_residual = true;
  bool dedup_dictionary = false;

  bool enable_cucl = true;
  bool enable_fucl = true;
  bool enable_scl = true;
  bool enable_wcl = true;
  bool enable_skl = true;
  bool enable_ikl = true;

  // Per-term scalar weights, unit by default.
  double weight_cucl = 1.0;
  double weight_fucl = 1.0;
  double weight_scl = 1.0;
  double weight_wcl = 1.0;
  double weight_skl = 1.0;
  double weight_ikl = 1.0;

  void validate() const;
};

TrainConfig parse_config_text(const std::string& text);
TrainConfig load_config_file(const std::filesystem::path& path);
std::string config_to_text(const TrainConfig& config);

}  // namespace mmcl
