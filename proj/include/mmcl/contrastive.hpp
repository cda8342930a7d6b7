#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmcl/augment.hpp"
#include "mmcl/corpus.hpp"
#include "mmcl/tensor.hpp"

namespace mmcl {

struct SimilarityConfig {
  /// Neighbor pools span the current batch; no cross-batch memory exists.
  enum class PoolScope { kBatch };

  int k = 4;         // neighbor count for the margin correction
  double tau = 2.0;  // temperature
  PoolScope pool_scope = PoolScope::kBatch;

  void validate() const {
    if (k < 0) throw ContractError("similarity: k must be >= 0");
    if (tau <= 0.0) throw ContractError("similarity: tau must be positive");
  }
};

/// Per-utterance encoder output plus the chunk layout needed to pool
/// representations at every contrastive level.
struct EncodedUtterance {
  const Utterance* utterance = nullptr;
  Tensor encoding;  // [n x d]
  std::vector<SlotSpan> chunks;
};

/// Vectors for all granularities of one batch: utterance rows are mean-pooled
/// token rows, chunk rows are means of their member token rows.
struct RepresentationSet {
  std::vector<Tensor> utterance_reps;            // [d] per batch utterance
  std::vector<std::vector<Tensor>> token_reps;   // [d] per token
  std::vector<std::vector<Tensor>> chunk_reps;   // [d] per chunk
  std::vector<std::vector<bool>> token_non_o;    // word-level membership

  const Tensor& resolve(const RepRef& ref) const;
};

RepresentationSet build_representation_set(std::span<const EncodedUtterance> batch);

/// cos(x, y); rejects zero vectors.
Tensor cosine(const Tensor& x, const Tensor& y);

/// cos(x,y) minus the mean cosine to the k nearest pool neighbors of each
/// argument. The pool must not contain x or y; k larger than the pool is
/// clamped with a warning.
Tensor margin_similarity(const Tensor& x, const Tensor& y,
                         std::span<const Tensor> pool, const SimilarityConfig& cfg);

using SimFn = std::function<Tensor(const Tensor&, const Tensor&)>;

/// -log( e^{s+/tau} / (e^{s+/tau} + sum_k e^{s_k/tau}) ), in log-sum-exp form.
Tensor info_nce_from_scores(const Tensor& positive_score,
                            std::span<const Tensor> negative_scores, double tau);
Tensor info_nce(const Tensor& anchor, const Tensor& positive,
                std::span<const Tensor> negatives, const SimilarityConfig& cfg,
                const SimFn& sim);

struct LevelLosses {
  Tensor scl;   // slot level
  Tensor wcl;   // word level
  Tensor cucl;  // coarse utterance level
  Tensor fucl;  // fine utterance level
};

/// Mean of info_nce over each level's anchors, with margin similarity scored
/// against the level's own representation pool (compared pair excluded).
/// Levels with no anchors contribute exactly zero.
LevelLosses level_losses(const RepresentationSet& reps, const ContrastiveBatch& pairs,
                         const SimilarityConfig& cfg);

}  // namespace mmcl
