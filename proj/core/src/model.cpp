#include "entlm/model.hpp"

#include <cmath>
#include <random>

#include "entlm/errors.hpp"

namespace entlm {
namespace {

enum class Init { kNormal, kZeros, kOnes };

constexpr double kInitStd = 0.02;

// Visits every parameter slot with its name, shape and initializer.
template <typename Params, typename Fn>
void for_each_slot(Params& p, Fn&& fn) {
  const ModelConfig& c = p.config;
  const std::size_t d = c.d_embd;
  fn("wte", p.token_embedding, Shape{c.vocab_size, d}, Init::kNormal);
  fn("wpe", p.position_embedding, Shape{c.max_seq_len, d}, Init::kNormal);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& layer = p.layers[l];
    const std::string prefix = "layers." + std::to_string(l) + ".";
    auto attention = [&](const std::string& name, auto& a, bool zero_output) {
      fn(prefix + name + ".q.weight", a.q_weight, Shape{d, d}, Init::kNormal);
      fn(prefix + name + ".q.bias", a.q_bias, Shape{d}, Init::kZeros);
      fn(prefix + name + ".k.weight", a.k_weight, Shape{d, d}, Init::kNormal);
      fn(prefix + name + ".k.bias", a.k_bias, Shape{d}, Init::kZeros);
      fn(prefix + name + ".v.weight", a.v_weight, Shape{d, d}, Init::kNormal);
      fn(prefix + name + ".v.bias", a.v_bias, Shape{d}, Init::kZeros);
      fn(prefix + name + ".o.weight", a.o_weight, Shape{d, d}, zero_output ? Init::kZeros : Init::kNormal);
      fn(prefix + name + ".o.bias", a.o_bias, Shape{d}, Init::kZeros);
    };
    fn(prefix + "ln1.gamma", layer.ln1_gamma, Shape{d}, Init::kOnes);
    fn(prefix + "ln1.beta", layer.ln1_beta, Shape{d}, Init::kZeros);
    attention("attn", layer.self_attn, false);
    fn(prefix + "ln2.gamma", layer.ln2_gamma, Shape{d}, Init::kOnes);
    fn(prefix + "ln2.beta", layer.ln2_beta, Shape{d}, Init::kZeros);
    fn(prefix + "ffn.in.weight", layer.ffn_in_weight, Shape{d, c.d_ff}, Init::kNormal);
    fn(prefix + "ffn.in.bias", layer.ffn_in_bias, Shape{c.d_ff}, Init::kZeros);
    fn(prefix + "ffn.out.weight", layer.ffn_out_weight, Shape{c.d_ff, d}, Init::kNormal);
    fn(prefix + "ffn.out.bias", layer.ffn_out_bias, Shape{d}, Init::kZeros);
    if (c.entity_attention) {
      fn(prefix + "ln3.gamma", layer.ln3_gamma, Shape{d}, Init::kOnes);
      fn(prefix + "ln3.beta", layer.ln3_beta, Shape{d}, Init::kZeros);
      attention("entity_attn", layer.entity_attn, true);
    }
  }
  fn("ln_f.gamma", p.lnf_gamma, Shape{d}, Init::kOnes);
  fn("ln_f.beta", p.lnf_beta, Shape{d}, Init::kZeros);
}

std::uint64_t stream_seed(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  // splitmix64 finaliser
  std::uint64_t z = seed ^ h;
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("model.") + name + " must be positive");
  };
  positive(n_layers, "n_layers");
  positive(n_heads, "n_heads");
  positive(d_embd, "d_embd");
  positive(d_ff, "d_ff");
  positive(vocab_size, "vocab_size");
  positive(max_seq_len, "max_seq_len");
  if (d_embd % n_heads != 0) {
    throw ConfigError("model.d_embd (" + std::to_string(d_embd) + ") must be divisible by model.n_heads (" +
                      std::to_string(n_heads) + ")");
  }
  if (!(ln_eps > 0.0)) throw ConfigError("model.ln_eps must be positive");
}

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams p;
  p.config = config;
  p.layers.resize(config.n_layers);
  for_each_slot(p, [seed](const std::string& name, Tensor& slot, const Shape& shape, Init init) {
    switch (init) {
      case Init::kZeros:
        slot = Tensor::zeros(shape);
        break;
      case Init::kOnes:
        slot = Tensor::ones(shape);
        break;
      case Init::kNormal: {
        std::mt19937_64 rng(stream_seed(seed, name));
        std::normal_distribution<double> normal(0.0, kInitStd);
        std::vector<double> values(shape_numel(shape));
        for (double& v : values) v = normal(rng);
        slot = Tensor::from(shape, std::move(values));
        break;
      }
    }
  });
  return p;
}

std::vector<NamedTensor> ModelParams::named_tensors() const {
  std::vector<NamedTensor> out;
  for_each_slot(*this, [&](const std::string& name, const Tensor& slot, const Shape&, Init) {
    out.push_back({name, slot});
  });
  return out;
}

std::vector<Tensor> ModelParams::tensors() const {
  std::vector<Tensor> out;
  for (auto& nt : named_tensors()) out.push_back(nt.tensor);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& nt : named_tensors()) n += nt.tensor.numel();
  return n;
}

ModelParams ModelParams::clone() const {
  ModelParams copy = *this;
  for_each_slot(copy, [](const std::string&, Tensor& slot, const Shape&, Init) { slot = slot.clone(); });
  return copy;
}

void ModelParams::set_requires_grad(bool flag) {
  for_each_slot(*this, [flag](const std::string&, Tensor& slot, const Shape&, Init) { slot.set_requires_grad(flag); });
}

std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t d = c.d_embd;
  const std::size_t attention = 4 * (d * d + d);
  std::size_t per_layer = 2 * d + attention + 2 * d + (d * c.d_ff + c.d_ff) + (c.d_ff * d + d);
  if (c.entity_attention) per_layer += 2 * d + attention;
  return c.vocab_size * d + c.max_seq_len * d + c.n_layers * per_layer + 2 * d;
}

std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelConfig& config) {
  config.validate();
  ModelParams skeleton;
  skeleton.config = config;
  skeleton.layers.resize(config.n_layers);
  std::vector<std::pair<std::string, Shape>> out;
  for_each_slot(skeleton, [&](const std::string& name, Tensor&, const Shape& shape, Init) {
    out.emplace_back(name, shape);
  });
  return out;
}

Tensor embed(const ModelParams& params, std::span<const TokenId> ids) {
  const ModelConfig& c = params.config;
  if (ids.empty()) throw LengthError("embed: empty token sequence");
  if (ids.size() > c.max_seq_len) {
    throw LengthError("embed: sequence of " + std::to_string(ids.size()) + " tokens exceeds max_seq_len " +
                      std::to_string(c.max_seq_len));
  }
  std::vector<TokenId> positions(ids.size());
  for (std::size_t t = 0; t < positions.size(); ++t) positions[t] = static_cast<TokenId>(t);
  return add(gather_rows(params.token_embedding, ids), gather_rows(params.position_embedding, positions));
}

Tensor multi_head_attention(const Tensor& query_src, const Tensor& key_src, const Tensor& value_src,
                            const AttentionParams& attn, std::size_t n_heads, Tensor* weights) {
  const std::size_t d = query_src.dim(1);
  const double factor = 1.0 / std::sqrt(static_cast<double>(d / n_heads));
  Tensor q = split_heads(add_row_bias(matmul(query_src, attn.q_weight), attn.q_bias), n_heads);
  Tensor k = split_heads(add_row_bias(matmul(key_src, attn.k_weight), attn.k_bias), n_heads);
  Tensor v = split_heads(add_row_bias(matmul(value_src, attn.v_weight), attn.v_bias), n_heads);
  Tensor probs = causal_softmax(causal_scores(q, k, factor));
  if (weights) *weights = probs;
  Tensor mixed = merge_heads(causal_mix(probs, v));
  return add_row_bias(matmul(mixed, attn.o_weight), attn.o_bias);
}

Tensor self_attention_sublayer(const Tensor& h, const LayerParams& layer, const ModelConfig& config,
                               Tensor* weights) {
  Tensor x = layer_norm(h, layer.ln1_gamma, layer.ln1_beta, config.ln_eps);
  return add(h, multi_head_attention(x, x, x, layer.self_attn, config.n_heads, weights));
}

Tensor ffn_sublayer(const Tensor& h, const LayerParams& layer, const ModelConfig& config) {
  Tensor x = layer_norm(h, layer.ln2_gamma, layer.ln2_beta, config.ln_eps);
  Tensor inner = gelu(add_row_bias(matmul(x, layer.ffn_in_weight), layer.ffn_in_bias));
  return add(h, add_row_bias(matmul(inner, layer.ffn_out_weight), layer.ffn_out_bias));
}

Tensor entity_attention_sublayer(const Tensor& h, const Tensor& entities, const LayerParams& layer,
                                 const ModelConfig& config, Tensor* weights) {
  if (!entities.defined() || entities.shape() != h.shape()) {
    throw ContractError("entity attention: entity matrix " +
                        (entities.defined() ? shape_string(entities.shape()) : std::string("undefined")) +
                        " does not match hidden states " + shape_string(h.shape()));
  }
  if (!layer.entity_attn.o_weight.defined()) throw ContractError("entity attention: layer has no entity parameters");
  Tensor x = layer_norm(h, layer.ln3_gamma, layer.ln3_beta, config.ln_eps);
  return add(h, multi_head_attention(x, entities, x, layer.entity_attn, config.n_heads, weights));
}

ForwardOutput forward(const ModelParams& params, std::span<const TokenId> ids, const Tensor& entities) {
  const ModelConfig& c = params.config;
  ForwardOutput out;
  Tensor h = embed(params, ids);
  if (c.entity_attention && (!entities.defined() || entities.rank() != 2 || entities.dim(0) != ids.size() ||
                             entities.dim(1) != c.d_embd)) {
    throw ContractError("forward: entity matrix " +
                        (entities.defined() ? shape_string(entities.shape()) : std::string("undefined")) +
                        " not aligned with " + std::to_string(ids.size()) + " tokens of width " +
                        std::to_string(c.d_embd));
  }
  out.activations.hidden.push_back(h);
  for (const LayerParams& layer : params.layers) {
    Tensor self_weights;
    h = self_attention_sublayer(h, layer, c, &self_weights);
    out.activations.self_attention.push_back(self_weights);
    h = ffn_sublayer(h, layer, c);
    if (c.entity_attention) {
      Tensor entity_weights;
      h = entity_attention_sublayer(h, entities, layer, c, &entity_weights);
      out.activations.entity_attention.push_back(entity_weights);
    }
    out.activations.hidden.push_back(h);
  }
  Tensor final_norm = layer_norm(h, params.lnf_gamma, params.lnf_beta, c.ln_eps);
  out.logits = matmul_bt(final_norm, params.token_embedding);
  return out;
}

Tensor next_token_loss(const ForwardOutput& out, std::span<const TokenId> ids) {
  if (ids.size() < 2) throw LengthError("next-token loss needs at least 2 tokens, got " + std::to_string(ids.size()));
  Tensor predictions = slice_rows(out.logits, 0, ids.size() - 1);
  return cross_entropy(predictions, ids.subspan(1));
}

Tensor next_token_loss(const ModelParams& params, std::span<const TokenId> ids, const Tensor& entities) {
  if (ids.size() < 2) throw LengthError("next-token loss needs at least 2 tokens, got " + std::to_string(ids.size()));
  return next_token_loss(forward(params, ids, entities), ids);
}

TokenId argmax_token(const Tensor& logits, std::size_t t) {
  const std::size_t vocab = logits.dim(1);
  auto row = logits.data().subspan(t * vocab, vocab);
  std::size_t best = 0;
  for (std::size_t j = 1; j < vocab; ++j) {
    if (row[j] > row[best]) best = j;
  }
  return static_cast<TokenId>(best);
}

}  // namespace entlm
