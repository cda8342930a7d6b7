#pragma once

#include <filesystem>
#include <memory>
#include <random>

#include "mmcl/config.hpp"
#include "mmcl/corpus.hpp"
#include "mmcl/encoder.hpp"
#include "mmcl/intent_decoder.hpp"
#include "mmcl/params.hpp"
#include "mmcl/slot_decoder.hpp"

namespace mmcl {

/// Full network: shared encoder, token-level intent decoder with voting, and
/// the graph-interaction slot decoder. Gold labels never enter forward();
/// they only meet the outputs inside loss terms, so slot predictions at one
/// position cannot depend on labels elsewhere.
class Model {
public:
  Model(Vocabulary vocab, const TrainConfig& config);

  struct Output {
    Tensor E;             // encoder output [n x d_E]
    Tensor intent_probs;  // [n x intent_vocab]
    std::vector<int> voted_intents;
    bool vote_fallback = false;
    Tensor slot_dist;     // [n x slot_vocab]
    std::vector<int> slot_ids;
  };

  std::vector<int> word_ids(const Utterance& u) const;
  /// Encoder pass only, for contrastive positives.
  Tensor encode(const Utterance& u, bool training = false,
                std::mt19937_64* dropout_rng = nullptr) const;
  Output forward(const Utterance& u, bool training = false,
                 std::mt19937_64* dropout_rng = nullptr) const;

  const Vocabulary& vocab() const { return vocab_; }
  const TrainConfig& config() const { return config_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  int vote_fallback_count() const { return vote_fallback_count_; }

  void save(const std::filesystem::path& path) const { store_.save(path); }
  void load(const std::filesystem::path& path) { store_.load(path); }

private:
  Vocabulary vocab_;
  TrainConfig config_;
  ParameterStore store_;
  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<IntentDecoder> intent_decoder_;
  std::unique_ptr<SlotDecoder> slot_decoder_;
  VotingConfig voting_;
  mutable int vote_fallback_count_ = 0;
};

}  // namespace mmcl
