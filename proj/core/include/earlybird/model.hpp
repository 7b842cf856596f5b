#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "earlybird/corpus.hpp"
#include "earlybird/rng.hpp"
#include "earlybird/tensor.hpp"

namespace earlybird {

struct ModelConfig {
  int n_layers = 2;
  int n_heads = 4;
  int hidden = 32;      // d
  int head_dim = 8;     // d_h = d / n_heads
  int ffn_dim = 128;    // d_f, 4d by default
  int vocab_size = 200;
  int max_seq_len = 32;
  int n_classes = 2;

  void validate() const;
  static ModelConfig with_defaults(int n_layers, int n_heads, int hidden,
                                   int vocab_size, int max_seq_len,
                                   int n_classes);
};

// Per-layer weights. Head matrices are stored per active head; ffn matrices
// shrink when neurons are pruned, so active counts are implied by sizes.
struct LayerParams {
  std::vector<Tensor> w_q, w_k, w_v;  // each d x d_h
  std::vector<Tensor> w_o;            // each d_h x d
  Tensor w_up;    // d x f_active
  Tensor w_down;  // f_active x d
  Tensor ln1_gain, ln1_bias;  // after MHA sublayer
  Tensor ln2_gain, ln2_bias;  // after FFN sublayer

  int head_count() const { return static_cast<int>(w_q.size()); }
  int neuron_count() const { return w_up.shape()[1]; }
};

// learnable importance coefficients: one scalar per head, one per
// intermediate neuron, initialized to 1.0
struct Coefficients {
  std::vector<Tensor> heads;    // per layer, length = active heads
  std::vector<Tensor> neurons;  // per layer, length = active neurons
};

struct ModelParams {
  ModelConfig config;  // original (unpruned) configuration
  Tensor tok_emb;      // vocab x d
  Tensor pos_emb;      // max_seq_len x d
  std::vector<LayerParams> layers;
  Tensor cls_w;  // d x n_classes
  Tensor cls_b;  // n_classes
  Coefficients coeffs;
  // original indices surviving in each layer; identity when unpruned
  std::vector<std::vector<int>> kept_heads;
  std::vector<std::vector<int>> kept_neurons;

  bool pruned() const;
  // apply fn to every parameter tensor except the coefficients
  void for_each_weight(const std::function<void(const std::string&, Tensor&)>& fn);
  // weights plus coefficients, in a fixed deterministic order
  void for_each_param(const std::function<void(const std::string&, Tensor&)>& fn);
  void set_requires_grad(bool rg);
  void zero_grad();
  ModelParams clone() const;
};

ModelParams init_params(const ModelConfig& config, Rng& rng);

struct TokenBatch {
  std::vector<std::vector<int>> tokens;  // all rows padded to equal length
  std::vector<int> labels;

  int batch_size() const { return static_cast<int>(tokens.size()); }
  int seq_len() const { return tokens.empty() ? 0 : static_cast<int>(tokens[0].size()); }
};

TokenBatch make_batch(const Dataset& ds, const std::vector<int>& indices);

// token + position embeddings, (batch*seq) x d; differentiable so a
// perturbation can be added before encoding
Tensor embed(Tape& tape, const TokenBatch& batch, const ModelParams& params);

// MHA(x) = sum_i c_H[i] * Att_i(x); caller applies residual + norm
Tensor mha_forward(Tape& tape, const Tensor& x, const LayerParams& layer,
                   const Tensor& c_heads, int batch, int seq);

// FFN(x) = (gelu(x W_up) col-scaled by c_F) W_down; caller applies
// residual + norm
Tensor ffn_forward(Tape& tape, const Tensor& x, const LayerParams& layer,
                   const Tensor& c_neurons);

// embed -> (+delta) -> layers -> mean pool -> classifier logits
Tensor forward(Tape& tape, const TokenBatch& batch, const ModelParams& params,
               const std::optional<Tensor>& delta = std::nullopt);

std::int64_t param_count(const ModelParams& params, bool exclude_embeddings);

// predictions without grad bookkeeping; argmax ties go to the lowest class
std::vector<int> predict(const ModelParams& params, const TokenBatch& batch);
std::vector<double> predict_probs(const ModelParams& params,
                                  const std::vector<int>& tokens);

// checkpoint format: `format: earlybird-ckpt v1`, a config line, kept
// head/neuron index lists, then named tensor sections
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

}  // namespace earlybird
