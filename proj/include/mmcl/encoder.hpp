#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "mmcl/params.hpp"
#include "mmcl/tensor.hpp"

namespace mmcl {

struct EncoderConfig {
  int embed_dim = 128;
  int lstm_hidden = 256;  // per direction
  int heads = 4;
  double dropout = 0.4;

  // Q/K/V projections map to 2*lstm_hidden split across heads.
  int attn_dim() const { return 2 * lstm_hidden; }
  int head_dim() const { return attn_dim() / heads; }
  void validate() const {
    if (embed_dim <= 0 || lstm_hidden <= 0 || heads <= 0) {
      throw ContractError("encoder config: dimensions must be positive");
    }
    if (attn_dim() % heads != 0) {
      throw ContractError("encoder config: attention dim not divisible by heads");
    }
    if (dropout < 0.0 || dropout >= 1.0) {
      throw ContractError("encoder config: dropout must be in [0,1)");
    }
  }
};

/// Inverted dropout: keeps values with probability 1-p and rescales, so
/// evaluation needs no correction. Identity when p == 0.
Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng);

/// One left-to-right LSTM pass. Gate layout along the 4H axis is
/// (input, forget, cell candidate, output); forget bias starts at 1.
class LstmCell {
public:
  LstmCell(ParameterStore& store, const std::string& prefix, int input_dim,
           int hidden, std::mt19937_64& rng);

  /// [n x input_dim] -> n hidden rows [1 x H], in input order.
  std::vector<Tensor> run(const Tensor& inputs) const;
  int hidden() const { return hidden_; }

private:
  int hidden_;
  Parameter* w_x_;
  Parameter* w_h_;
  Parameter* bias_;
};

class BiLstm {
public:
  BiLstm(ParameterStore& store, const std::string& prefix, int input_dim,
         int hidden, std::mt19937_64& rng);

  /// [n x input_dim] -> [n x 2H]; row t is concat(fwd_t, bwd_t).
  Tensor forward(const Tensor& inputs) const;
  int output_dim() const { return 2 * fwd_.hidden(); }

private:
  LstmCell fwd_;
  LstmCell bwd_;
};

class MultiHeadSelfAttention {
public:
  MultiHeadSelfAttention(ParameterStore& store, const std::string& prefix,
                         int input_dim, int heads, int head_dim,
                         std::mt19937_64& rng);

  /// [n x input_dim] -> [n x heads*head_dim]. When `attention_out` is given
  /// it receives each head's row-stochastic attention matrix.
  Tensor forward(const Tensor& inputs,
                 std::vector<Tensor>* attention_out = nullptr) const;
  int output_dim() const { return static_cast<int>(heads_.size()) * head_dim_; }

private:
  struct Head {
    Parameter* wq;
    Parameter* wk;
    Parameter* wv;
  };
  std::vector<Head> heads_;
  int head_dim_;
};

struct EncoderOutput {
  Tensor E;  // [n x (2H + attn_dim)]
  Tensor H;  // [n x 2H]
  Tensor C;  // [n x attn_dim]
};

/// Shared self-attentive encoder: embedding -> BiLSTM -> self-attention over
/// the embeddings, output E = H || C. Dropout touches the embeddings and H
/// during training only.
class Encoder {
public:
  Encoder(ParameterStore& store, const EncoderConfig& config, int word_vocab,
          std::mt19937_64& rng);

  Tensor embed(std::span<const int> ids) const;
  EncoderOutput encode(std::span<const int> ids, bool training = false,
                       std::mt19937_64* dropout_rng = nullptr) const;

  const EncoderConfig& config() const { return config_; }
  int output_dim() const { return 2 * config_.lstm_hidden + config_.attn_dim(); }

private:
  EncoderConfig config_;
  Parameter* embedding_;
  BiLstm bilstm_;
  MultiHeadSelfAttention attention_;
};

}  // namespace mmcl
