#include "mmcl/model.hpp"

namespace mmcl {

Model::Model(Vocabulary vocab, const TrainConfig& config)
    : vocab_(std::move(vocab)), config_(config) {
  config_.validate();
  std::mt19937_64 init_rng(config_.seed);

  EncoderConfig enc;
  enc.embed_dim = config_.embed_dim;
  enc.lstm_hidden = config_.lstm_hidden;
  enc.heads = config_.heads;
  enc.dropout = config_.dropout;
  encoder_ = std::make_unique<Encoder>(store_, enc, vocab_.word_count(), init_rng);

  intent_decoder_ = std::make_unique<IntentDecoder>(
      store_, encoder_->output_dim(), config_.lstm_hidden, vocab_.intent_count(),
      init_rng);

  SlotDecoderConfig slot;
  slot.input_dim = encoder_->output_dim();
  slot.intent_vocab = vocab_.intent_count();
  slot.slot_vocab = vocab_.slot_tag_count();
  slot.lstm_hidden = config_.lstm_hidden;
  slot.gat_layers = config_.gat_layers;
  slot.slot_window = config_.slot_window;
  slot.gat_elu = config_.gat_elu;
  slot.gat_residual = config_.gat_residual;
  slot_decoder_ = std::make_unique<SlotDecoder>(store_, slot, init_rng);

  voting_.threshold = config_.vote_threshold;
}

std::vector<int> Model::word_ids(const Utterance& u) const {
  std::vector<int> ids;
  ids.reserve(u.tokens.size());
  for (const std::string& w : u.tokens) ids.push_back(vocab_.word_id(w));
  return ids;
}

Tensor Model::encode(const Utterance& u, bool training,
                     std::mt19937_64* dropout_rng) const {
  return encoder_->encode(word_ids(u), training, dropout_rng).E;
}

Model::Output Model::forward(const Utterance& u, bool training,
                             std::mt19937_64* dropout_rng) const {
  Output out;
  out.E = encoder_->encode(word_ids(u), training, dropout_rng).E;
  out.intent_probs = intent_decoder_->forward(out.E);
  out.voted_intents = vote(out.intent_probs, voting_, &out.vote_fallback);
  if (out.vote_fallback) ++vote_fallback_count_;
  SlotDecoder::Result slots =
      slot_decoder_->decode(out.E, out.intent_probs, out.voted_intents);
  out.slot_dist = std::move(slots.slot_dist);
  out.slot_ids = std::move(slots.slot_ids);
  return out;
}

}  // namespace mmcl
