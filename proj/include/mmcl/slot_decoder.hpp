#pragma once

#include <random>
#include <span>
#include <vector>

#include "mmcl/encoder.hpp"
#include "mmcl/params.hpp"
#include "mmcl/tensor.hpp"

namespace mmcl {

/// Interaction graph over m predicted-intent nodes (ids 0..m-1) followed by
/// n slot nodes (ids m..m+n-1). Slot nodes see themselves, slot neighbors
/// within the window, and every intent; intent nodes see everything.
struct GlobalGraph {
  int n_intents = 0;
  int n_slots = 0;
  std::vector<std::vector<int>> neighbors;  // sorted, self-loop included

  int node_count() const { return n_intents + n_slots; }
};

GlobalGraph build_graph(int n_slots, int n_intents, int window);

struct SlotDecoderConfig {
  int input_dim = 0;     // encoder output width d_E
  int intent_vocab = 0;  // feeds the BiLSTM input and the intent embedding
  int slot_vocab = 0;
  int lstm_hidden = 0;   // graph feature width is 2*lstm_hidden
  int gat_layers = 2;
  int slot_window = 2;
  bool gat_elu = false;   // sigmoid per the aggregation formula; ELU optional
  bool gat_residual = true;  // skip connection around each layer
};

/// Intent-conditioned slot scorer: BiLSTM over [intent probs || encoder rows],
/// message passing over the global graph, softmax slot distributions.
class SlotDecoder {
public:
  SlotDecoder(ParameterStore& store, const SlotDecoderConfig& config,
              std::mt19937_64& rng);

  /// [n x intent_vocab] and [n x input_dim] -> [n x 2H]
  Tensor slot_bilstm(const Tensor& encoder_out, const Tensor& intent_probs) const;

  /// One aggregation step. `attention_out`, when given, receives each node's
  /// normalized coefficients over its neighborhood (same order as neighbors).
  Tensor gat_layer(const Tensor& features, const GlobalGraph& graph, int layer,
                   std::vector<Tensor>* attention_out = nullptr) const;

  struct Result {
    Tensor slot_dist;           // [n x slot_vocab], rows on the simplex
    std::vector<int> slot_ids;  // row argmax, lowest index on ties
    GlobalGraph graph;
  };
  Result decode(const Tensor& encoder_out, const Tensor& intent_probs,
                std::span<const int> voted_intents) const;

  const SlotDecoderConfig& config() const { return config_; }

private:
  SlotDecoderConfig config_;
  BiLstm bilstm_;
  Parameter* intent_embedding_;
  std::vector<Parameter*> gat_weight_;  // W_g per layer
  std::vector<Parameter*> attn_src_;    // a = [attn_src ; attn_dst] per layer
  std::vector<Parameter*> attn_dst_;
  Parameter* w_slot_;
};

/// Row argmax with lowest-index tie breaking.
std::vector<int> argmax_rows(const Tensor& dist);

}  // namespace mmcl
