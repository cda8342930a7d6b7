#include "mmcl/encoder.hpp"

#include <cmath>

namespace mmcl {

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng) {
  if (p == 0.0) return x;
  if (p < 0.0 || p >= 1.0) throw ContractError("dropout: p must be in [0,1)");
  Tensor mask(x.shape());
  std::bernoulli_distribution keep(1.0 - p);
  const double scale = 1.0 / (1.0 - p);
  for (double& m : mask.values()) m = keep(rng) ? scale : 0.0;
  return mul(x, mask);
}

LstmCell::LstmCell(ParameterStore& store, const std::string& prefix, int input_dim,
                   int hidden, std::mt19937_64& rng)
    : hidden_(hidden) {
  w_x_ = &store.create(prefix + "/w_x", {input_dim, 4 * hidden});
  w_h_ = &store.create(prefix + "/w_h", {hidden, 4 * hidden});
  bias_ = &store.create(prefix + "/b", {1, 4 * hidden});
  init_linear(w_x_->tensor, rng, input_dim);
  init_linear(w_h_->tensor, rng, hidden);
  for (int i = hidden; i < 2 * hidden; ++i) bias_->tensor(0, i) = 1.0;  // forget gate
}

std::vector<Tensor> LstmCell::run(const Tensor& inputs) const {
  const int n = inputs.dim(0);
  const int H = hidden_;
  // Input projections for every step in one matmul.
  Tensor xw = matmul(inputs, w_x_->tensor);

  Tensor h = Tensor({1, H});
  Tensor c = Tensor({1, H});
  std::vector<Tensor> outputs;
  outputs.reserve(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    Tensor gates = add(add(slice(xw, 0, t, t + 1), matmul(h, w_h_->tensor)),
                       bias_->tensor);
    Tensor i_gate = sigmoid(slice(gates, 1, 0, H));
    Tensor f_gate = sigmoid(slice(gates, 1, H, 2 * H));
    Tensor g_cand = tanh(slice(gates, 1, 2 * H, 3 * H));
    Tensor o_gate = sigmoid(slice(gates, 1, 3 * H, 4 * H));
    c = add(mul(f_gate, c), mul(i_gate, g_cand));
    h = mul(o_gate, tanh(c));
    outputs.push_back(h);
  }
  return outputs;
}

BiLstm::BiLstm(ParameterStore& store, const std::string& prefix, int input_dim,
               int hidden, std::mt19937_64& rng)
    : fwd_(store, prefix + "/fwd", input_dim, hidden, rng),
      bwd_(store, prefix + "/bwd", input_dim, hidden, rng) {}

Tensor BiLstm::forward(const Tensor& inputs) const {
  const int n = inputs.dim(0);
  std::vector<Tensor> fwd_rows = fwd_.run(inputs);

  // The backward pass reads the sequence right to left.
  std::vector<Tensor> reversed_rows;
  reversed_rows.reserve(static_cast<std::size_t>(n));
  for (int t = n - 1; t >= 0; --t) reversed_rows.push_back(slice(inputs, 0, t, t + 1));
  Tensor reversed = n == 1 ? reversed_rows[0] : concat(reversed_rows, 0);
  std::vector<Tensor> bwd_rows = bwd_.run(reversed);

  std::vector<Tensor> combined;
  combined.reserve(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    combined.push_back(concat({fwd_rows[static_cast<std::size_t>(t)],
                               bwd_rows[static_cast<std::size_t>(n - 1 - t)]},
                              1));
  }
  return n == 1 ? combined[0] : concat(combined, 0);
}

MultiHeadSelfAttention::MultiHeadSelfAttention(ParameterStore& store,
                                               const std::string& prefix,
                                               int input_dim, int heads,
                                               int head_dim, std::mt19937_64& rng)
    : head_dim_(head_dim) {
  for (int h = 0; h < heads; ++h) {
    const std::string base = prefix + "/head" + std::to_string(h);
    Head head{&store.create(base + "/wq", {input_dim, head_dim}),
              &store.create(base + "/wk", {input_dim, head_dim}),
              &store.create(base + "/wv", {input_dim, head_dim})};
    init_linear(head.wq->tensor, rng, input_dim);
    init_linear(head.wk->tensor, rng, input_dim);
    init_linear(head.wv->tensor, rng, input_dim);
    heads_.push_back(head);
  }
}

Tensor MultiHeadSelfAttention::forward(const Tensor& inputs,
                                       std::vector<Tensor>* attention_out) const {
  std::vector<Tensor> head_outputs;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(head_dim_));
  for (const Head& head : heads_) {
    Tensor q = matmul(inputs, head.wq->tensor);
    Tensor k = matmul(inputs, head.wk->tensor);
    Tensor v = matmul(inputs, head.wv->tensor);
    Tensor scores = scale(matmul(q, k, false, true), inv_sqrt_dk);
    Tensor weights = softmax(scores, 1);
    if (attention_out) attention_out->push_back(weights);
    head_outputs.push_back(matmul(weights, v));
  }
  return head_outputs.size() == 1 ? head_outputs[0] : concat(head_outputs, 1);
}

Encoder::Encoder(ParameterStore& store, const EncoderConfig& config, int word_vocab,
                 std::mt19937_64& rng)
    : config_((config.validate(), config)),
      embedding_(&store.create("encoder/embedding", {word_vocab, config.embed_dim})),
      bilstm_(store, "encoder/lstm", config.embed_dim, config.lstm_hidden, rng),
      attention_(store, "encoder/attn", config.embed_dim, config.heads,
                 config.head_dim(), rng) {
  init_linear(embedding_->tensor, rng, config.embed_dim);
}

Tensor Encoder::embed(std::span<const int> ids) const {
  return embedding_lookup(embedding_->tensor, ids);
}

EncoderOutput Encoder::encode(std::span<const int> ids, bool training,
                              std::mt19937_64* dropout_rng) const {
  Tensor emb = embed(ids);
  if (training && config_.dropout > 0.0) {
    if (!dropout_rng) throw ContractError("encode: training mode needs an rng");
    emb = dropout(emb, config_.dropout, *dropout_rng);
  }
  Tensor h = bilstm_.forward(emb);
  if (training && config_.dropout > 0.0) {
    h = dropout(h, config_.dropout, *dropout_rng);
  }
  Tensor c = attention_.forward(emb);
  EncoderOutput out;
  out.H = h;
  out.C = c;
  out.E = concat({h, c}, 1);
  return out;
}

}  // namespace mmcl
