#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "entlm/ops.hpp"
#include "entlm/tensor.hpp"

namespace entlm {

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t d_embd = 128;
  std::size_t d_ff = 512;
  std::size_t vocab_size = 8000;
  std::size_t max_seq_len = 128;
  // false gives the plain GPT-2 style decoder.
  bool entity_attention = true;
  double ln_eps = kDefaultLayerNormEps;

  // Throws ConfigError naming the offending field.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct AttentionParams {
  Tensor q_weight, q_bias;
  Tensor k_weight, k_bias;
  Tensor v_weight, v_bias;
  Tensor o_weight, o_bias;
};

struct LayerParams {
  Tensor ln1_gamma, ln1_beta;
  AttentionParams self_attn;
  Tensor ln2_gamma, ln2_beta;
  Tensor ffn_in_weight, ffn_in_bias;
  Tensor ffn_out_weight, ffn_out_bias;
  // Undefined in baseline mode.
  Tensor ln3_gamma, ln3_beta;
  AttentionParams entity_attn;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// All learned tensors. The output projection reuses token_embedding.
struct ModelParams {
  ModelConfig config;
  Tensor token_embedding;     // vocab_size x d_embd
  Tensor position_embedding;  // max_seq_len x d_embd
  std::vector<LayerParams> layers;
  Tensor lnf_gamma, lnf_beta;

  // Projections and embeddings ~ N(0, 0.02), biases 0, layer-norm scale 1 and
  // shift 0, entity-attention output projection 0. Each tensor draws from
  // its own stream derived from (seed, name), so baseline and entity models
  // built from one seed share every common tensor bitwise.
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);

  // Stable order; names such as "layers.0.attn.q.weight".
  std::vector<NamedTensor> named_tensors() const;
  std::vector<Tensor> tensors() const;

  std::size_t parameter_count() const;
  // Deep copy.
  ModelParams clone() const;
  void set_requires_grad(bool flag);
};

// Closed-form count of the tensors initialize() would create.
std::size_t parameter_count(const ModelConfig& config);

// Names and shapes initialize() would create, in named_tensors() order.
std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelConfig& config);

struct BlockActivations {
  // hidden[0] is the embedding output, hidden[l] the output of block l.
  std::vector<Tensor> hidden;
  // Per layer, [n_heads x s x s].
  std::vector<Tensor> self_attention;
  // Empty in baseline mode.
  std::vector<Tensor> entity_attention;

  const Tensor& final_hidden() const { return hidden.back(); }
};

struct ForwardOutput {
  Tensor logits;  // s x vocab_size
  BlockActivations activations;
};

// Row t = token_embedding[ids[t]] + position_embedding[t].
Tensor embed(const ModelParams& params, std::span<const TokenId> ids);

// Multi-head causal attention of the query source over key/value sources.
// Writes the [n_heads x s x s] weights to *weights when given.
Tensor multi_head_attention(const Tensor& query_src, const Tensor& key_src, const Tensor& value_src,
                            const AttentionParams& attn, std::size_t n_heads, Tensor* weights = nullptr);

// h + MHA(LN1(h)).
Tensor self_attention_sublayer(const Tensor& h, const LayerParams& layer, const ModelConfig& config,
                               Tensor* weights = nullptr);
// h + W2 gelu(W1 LN2(h) + b1) + b2, per position.
Tensor ffn_sublayer(const Tensor& h, const LayerParams& layer, const ModelConfig& config);
// h + MHA(Q = LN3(h), K = entities, V = LN3(h)).
Tensor entity_attention_sublayer(const Tensor& h, const Tensor& entities, const LayerParams& layer,
                                 const ModelConfig& config, Tensor* weights = nullptr);

// Full network. entities is [s x d_embd] in entity mode and ignored (may be
// undefined) in baseline mode.
ForwardOutput forward(const ModelParams& params, std::span<const TokenId> ids, const Tensor& entities);

// Mean next-token negative log-likelihood of ids[1..] given ids[..s-1].
Tensor next_token_loss(const ModelParams& params, std::span<const TokenId> ids, const Tensor& entities);
Tensor next_token_loss(const ForwardOutput& out, std::span<const TokenId> ids);

// Index of the largest logit in row t (debugging aid).
TokenId argmax_token(const Tensor& logits, std::size_t t);

}  // namespace entlm
