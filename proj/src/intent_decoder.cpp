#include "mmcl/intent_decoder.hpp"

namespace mmcl {

IntentDecoder::IntentDecoder(ParameterStore& store, int input_dim, int lstm_hidden,
                             int intent_vocab, std::mt19937_64& rng)
    : bilstm_(store, "intent/lstm", input_dim, lstm_hidden, rng),
      intent_vocab_(intent_vocab) {
  const int hidden = lstm_hidden;
  w_hidden_ = &store.create("intent/head/w_h", {2 * lstm_hidden, hidden});
  b_hidden_ = &store.create("intent/head/b_h", {1, hidden});
  w_intent_ = &store.create("intent/head/w_i", {hidden, intent_vocab});
  b_intent_ = &store.create("intent/head/b_i", {1, intent_vocab});
  init_linear(w_hidden_->tensor, rng, 2 * lstm_hidden);
  init_linear(w_intent_->tensor, rng, hidden);
}

Tensor IntentDecoder::intent_bilstm(const Tensor& encoder_out) const {
  return bilstm_.forward(encoder_out);
}

Tensor IntentDecoder::token_intent_probs(const Tensor& hidden_states) const {
  Tensor pre = leaky_relu(add(matmul(hidden_states, w_hidden_->tensor),
                              b_hidden_->tensor),
                          0.01);
  return sigmoid(add(matmul(pre, w_intent_->tensor), b_intent_->tensor));
}

Tensor IntentDecoder::forward(const Tensor& encoder_out) const {
  return token_intent_probs(intent_bilstm(encoder_out));
}

std::vector<int> threshold_vote(const Tensor& probs, double threshold) {
  const int n = probs.dim(0);
  const int vocab = probs.dim(1);
  std::vector<int> result;
  for (int j = 0; j < vocab; ++j) {
    int above = 0;
    for (int t = 0; t < n; ++t) above += (probs(t, j) > threshold);
    if (2 * above > n) result.push_back(j);  // strict majority
  }
  return result;
}

std::vector<int> vote(const Tensor& probs, const VotingConfig& cfg,
                      bool* fallback_used) {
  cfg.validate();
  if (probs.rank() != 2 || probs.dim(0) < 1) {
    throw ContractError("vote: probability matrix must be [n x intents], n >= 1");
  }
  std::vector<int> result = threshold_vote(probs, cfg.threshold);
  if (fallback_used) *fallback_used = result.empty();
  if (result.empty()) {
    // Highest column mean; ties resolve to the lowest id.
    const int n = probs.dim(0), vocab = probs.dim(1);
    int best = 0;
    double best_mean = -1.0;
    for (int j = 0; j < vocab; ++j) {
      double mean = 0.0;
      for (int t = 0; t < n; ++t) mean += probs(t, j);
      mean /= n;
      if (mean > best_mean) {
        best_mean = mean;
        best = j;
      }
    }
    result.push_back(best);
  }
  return result;
}

}  // namespace mmcl
