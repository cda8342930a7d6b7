#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "mmcl/corpus.hpp"

namespace mmcl {

/// A slot-substituted copy of a base utterance. Chunk i of the base always
/// corresponds to chunk i of the substituted utterance; intents and O tokens
/// carry over unchanged.
struct PositiveUtterance {
  Utterance base;
  Utterance utterance;
  std::vector<SlotSpan> base_chunks;
  std::vector<SlotSpan> positive_chunks;
};

/// Reference into a batch's representations. Batch utterances are indexed
/// 0..B-1 for bases and B..2B-1 for positives (positive i at B+i).
struct RepRef {
  enum class Kind { kUtterance, kToken, kChunkMean };
  Kind kind = Kind::kUtterance;
  int utt = 0;
  int index = 0;  // token position (kToken) or chunk index (kChunkMean)
  bool operator==(const RepRef&) const = default;
};

struct ContrastivePair {
  RepRef anchor;
  RepRef positive;
  std::vector<RepRef> negatives;
  bool operator==(const ContrastivePair&) const = default;
};

/// Anchor/positive/negative structure for the four contrastive levels of one
/// training batch.
struct ContrastiveBatch {
  std::vector<ContrastivePair> coarse_utt;
  std::vector<ContrastivePair> fine_utt;
  std::vector<ContrastivePair> slot;
  std::vector<ContrastivePair> word;
};

/// Replaces every chunk of `u` with a phrase drawn uniformly (with
/// multiplicity) from the dictionary entry of its slot type. A chunk whose
/// type is absent from the dictionary is kept as-is and counted in
/// `missing_type_count` when provided.
PositiveUtterance generate_positive(const Utterance& u, const SlotDictionary& dict,
                                    std::mt19937_64& rng,
                                    int* missing_type_count = nullptr);

/// Enumerates the pair lists for all four levels over a batch of bases and
/// their positives (positives[i] must be derived from bases[i]).
ContrastiveBatch build_batch_pairs(std::span<const Utterance> bases,
                                   std::span<const PositiveUtterance> positives,
                                   std::mt19937_64& rng, int negatives_per_anchor);

/// One JSON record per pair: level, anchor ref, positive ref, negative refs.
std::string pair_manifest_json(const ContrastiveBatch& batch);

}  // namespace mmcl
