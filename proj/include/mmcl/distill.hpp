#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "mmcl/corpus.hpp"
#include "mmcl/tensor.hpp"

namespace mmcl {

/// Previous-epoch predictions for every training example, kept as plain
/// values so no gradient can reach them. Epoch 0 holds the gold labels:
/// one-hot slot rows and the multi-hot intent vector broadcast per token.
struct PredictionSnapshot {
  int epoch = 0;
  int slot_vocab = 0;
  int intent_vocab = 0;
  std::vector<std::vector<double>> slot_rows;    // per example, n*slot_vocab
  std::vector<std::vector<double>> intent_rows;  // per example, n*intent_vocab

  std::size_t size() const { return slot_rows.size(); }
  int tokens_of(int example) const {
    return static_cast<int>(slot_rows[static_cast<std::size_t>(example)].size()) /
           slot_vocab;
  }
  void validate() const;
};

/// Gold-label snapshot for epoch 0.
PredictionSnapshot initial_snapshot(const std::vector<Utterance>& train,
                                    const Vocabulary& vocab);

/// Sum_c p_c ln(p_c/q_c) with 0 ln(0/q) = 0 and q floored at 1e-12.
double kl_divergence(std::span<const double> p, std::span<const double> q);
/// Same divergence with gradient flowing only through q.
Tensor kl_divergence(std::span<const double> p, const Tensor& q);

/// Per-dimension Bernoulli KL (p,1-p) || (q,1-q), summed over dimensions;
/// the reading of the intent distillation term for sigmoid outputs.
double bernoulli_kl_sum(std::span<const double> p, std::span<const double> q);
Tensor bernoulli_kl_sum(std::span<const double> p, const Tensor& q);

/// Mean over examples and tokens of KL(previous slot row || current row).
Tensor l_skl(const PredictionSnapshot& snapshot, std::span<const int> example_ids,
             std::span<const Tensor> current_slot_dists);

/// Mean over examples and tokens of the summed Bernoulli KL between previous
/// and current token intent vectors.
Tensor l_ikl(const PredictionSnapshot& snapshot, std::span<const int> example_ids,
             std::span<const Tensor> current_intent_probs);

/// Wholesale replacement at epoch end.
PredictionSnapshot make_snapshot(std::vector<std::vector<double>> slot_rows,
                                 std::vector<std::vector<double>> intent_rows,
                                 int slot_vocab, int intent_vocab, int epoch);

void save_snapshot(const std::filesystem::path& path,
                   const PredictionSnapshot& snapshot);
PredictionSnapshot load_snapshot(const std::filesystem::path& path);

}  // namespace mmcl
