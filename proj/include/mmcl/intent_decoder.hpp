#pragma once

#include <random>
#include <vector>

#include "mmcl/encoder.hpp"
#include "mmcl/params.hpp"
#include "mmcl/tensor.hpp"

namespace mmcl {

struct VotingConfig {
  double threshold = 0.5;
  void validate() const {
    if (threshold <= 0.0 || threshold >= 1.0) {
      throw ContractError("voting: threshold must be in (0,1)");
    }
  }
};

/// Token-level multi-label intent head: an intent-aware BiLSTM over the
/// encoder output followed by a two-layer projection with sigmoid outputs.
/// Rows of the probability matrix are independent Bernoullis, not a simplex.
class IntentDecoder {
public:
  IntentDecoder(ParameterStore& store, int input_dim, int lstm_hidden,
                int intent_vocab, std::mt19937_64& rng);

  /// [n x input_dim] -> [n x 2H]
  Tensor intent_bilstm(const Tensor& encoder_out) const;
  /// [n x 2H] -> [n x intent_vocab], entries in (0,1)
  Tensor token_intent_probs(const Tensor& hidden) const;
  Tensor forward(const Tensor& encoder_out) const;

  int intent_vocab() const { return intent_vocab_; }

private:
  BiLstm bilstm_;
  Parameter* w_hidden_;
  Parameter* b_hidden_;
  Parameter* w_intent_;
  Parameter* b_intent_;
  int intent_vocab_;
};

/// Intents above threshold at a strict majority of tokens; may be empty.
std::vector<int> threshold_vote(const Tensor& probs, double threshold);

/// threshold_vote with a fallback: an empty result becomes the single intent
/// with the highest column mean, so the prediction is never empty.
std::vector<int> vote(const Tensor& probs, const VotingConfig& cfg,
                      bool* fallback_used = nullptr);

}  // namespace mmcl
