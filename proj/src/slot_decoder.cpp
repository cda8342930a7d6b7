#include "mmcl/slot_decoder.hpp"

#include <algorithm>

namespace mmcl {

GlobalGraph build_graph(int n_slots, int n_intents, int window) {
  if (n_slots < 1) throw ContractError("build_graph: need at least one slot node");
  if (n_intents < 1) throw ContractError("build_graph: need at least one intent node");
  GlobalGraph g;
  g.n_intents = n_intents;
  g.n_slots = n_slots;
  g.neighbors.resize(static_cast<std::size_t>(n_intents + n_slots));
  // Intent nodes: every intent (self included) and every slot.
  for (int i = 0; i < n_intents; ++i) {
    for (int j = 0; j < n_intents + n_slots; ++j) {
      g.neighbors[static_cast<std::size_t>(i)].push_back(j);
    }
  }
  // Slot nodes: all intents, slot neighbors within the window, self.
  for (int t = 0; t < n_slots; ++t) {
    auto& nbrs = g.neighbors[static_cast<std::size_t>(n_intents + t)];
    for (int i = 0; i < n_intents; ++i) nbrs.push_back(i);
    const int lo = std::max(0, t - window);
    const int hi = std::min(n_slots - 1, t + window);
    for (int s = lo; s <= hi; ++s) nbrs.push_back(n_intents + s);
  }
  return g;
}

SlotDecoder::SlotDecoder(ParameterStore& store, const SlotDecoderConfig& config,
                         std::mt19937_64& rng)
    : config_(config),
      bilstm_(store, "slot/lstm", config.intent_vocab + config.input_dim,
              config.lstm_hidden, rng) {
  const int d_g = 2 * config.lstm_hidden;
  intent_embedding_ = &store.create("slot/intent_embedding",
                                    {config.intent_vocab, d_g});
  init_linear(intent_embedding_->tensor, rng, d_g);
  for (int l = 0; l < config.gat_layers; ++l) {
    const std::string base = "slot/gat" + std::to_string(l);
    gat_weight_.push_back(&store.create(base + "/w_g", {d_g, d_g}));
    attn_src_.push_back(&store.create(base + "/a_src", {d_g, 1}));
    attn_dst_.push_back(&store.create(base + "/a_dst", {d_g, 1}));
    init_linear(gat_weight_.back()->tensor, rng, d_g);
    init_linear(attn_src_.back()->tensor, rng, d_g);
    init_linear(attn_dst_.back()->tensor, rng, d_g);
  }
  w_slot_ = &store.create("slot/w_s", {d_g, config.slot_vocab});
  init_linear(w_slot_->tensor, rng, d_g);
}

Tensor SlotDecoder::slot_bilstm(const Tensor& encoder_out,
                                const Tensor& intent_probs) const {
  if (encoder_out.dim(0) != intent_probs.dim(0)) {
    throw DimensionError("slot_bilstm: encoder rows and intent rows differ");
  }
  return bilstm_.forward(concat({intent_probs, encoder_out}, 1));
}

Tensor SlotDecoder::gat_layer(const Tensor& features, const GlobalGraph& graph,
                              int layer, std::vector<Tensor>* attention_out) const {
  const int n_nodes = graph.node_count();
  if (features.dim(0) != n_nodes) {
    throw DimensionError("gat_layer: feature rows do not match the graph");
  }
  const auto l = static_cast<std::size_t>(layer);
  Tensor projected = matmul(features, gat_weight_.at(l)->tensor);  // [N x d_g]
  Tensor src_score = matmul(projected, attn_src_.at(l)->tensor);   // [N x 1]
  Tensor dst_score = matmul(projected, attn_dst_.at(l)->tensor);   // [N x 1]

  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(n_nodes));
  for (int i = 0; i < n_nodes; ++i) {
    const auto& nbrs = graph.neighbors[static_cast<std::size_t>(i)];
    std::vector<Tensor> nbr_scores, nbr_feats;
    for (int j : nbrs) {
      nbr_scores.push_back(slice(dst_score, 0, j, j + 1));
      nbr_feats.push_back(slice(projected, 0, j, j + 1));
    }
    Tensor scores = nbr_scores.size() == 1 ? nbr_scores[0] : concat(nbr_scores, 0);
    scores = leaky_relu(add(scores, slice(src_score, 0, i, i + 1)), 0.2);
    Tensor alpha = softmax(scores, 0);  // [deg x 1]
    if (attention_out) attention_out->push_back(alpha);
    Tensor stacked = nbr_feats.size() == 1 ? nbr_feats[0] : concat(nbr_feats, 0);
    Tensor aggregated = matmul(alpha, stacked, true, false);  // [1 x d_g]
    Tensor activated = config_.gat_elu ? elu(aggregated) : sigmoid(aggregated);
    if (config_.gat_residual) {
      activated = add(activated, slice(features, 0, i, i + 1));
    }
    rows.push_back(activated);
  }
  return rows.size() == 1 ? rows[0] : concat(rows, 0);
}

SlotDecoder::Result SlotDecoder::decode(const Tensor& encoder_out,
                                        const Tensor& intent_probs,
                                        std::span<const int> voted_intents) const {
  if (voted_intents.empty()) {
    throw ContractError("decode: voted intent set must be non-empty");
  }
  Tensor s = slot_bilstm(encoder_out, intent_probs);
  const int n = s.dim(0);
  const int m = static_cast<int>(voted_intents.size());

  Tensor intent_feats = embedding_lookup(intent_embedding_->tensor, voted_intents);
  Tensor g = concat({intent_feats, s}, 0);
  Result result;
  result.graph = build_graph(n, m, config_.slot_window);
  for (int l = 0; l < config_.gat_layers; ++l) {
    g = gat_layer(g, result.graph, l);
  }
  Tensor slot_nodes = slice(g, 0, m, m + n);
  result.slot_dist = softmax(matmul(slot_nodes, w_slot_->tensor), 1);
  result.slot_ids = argmax_rows(result.slot_dist);
  return result;
}

std::vector<int> argmax_rows(const Tensor& dist) {
  const int rows = dist.dim(0), cols = dist.dim(1);
  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    int best = 0;
    for (int c = 1; c < cols; ++c) {
      if (dist(r, c) > dist(r, best)) best = c;
    }
    ids.push_back(best);
  }
  return ids;
}

}  // namespace mmcl
