#pragma once

#include <cstdint>
#include <span>

#include "entlm/tensor.hpp"

namespace entlm {

using TokenId = std::int32_t;

// Differentiable operations. Each records its backward rule on the active
// tape when any input requires grad; otherwise it is a plain forward
// computation.

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sum(const Tensor& a);

// x[s x d] + bias[d], broadcast over rows.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);

// a[m x k] * b[k x n].
Tensor matmul(const Tensor& a, const Tensor& b);
// a[m x k] * b[n x k]^T, without materialising the transpose.
Tensor matmul_bt(const Tensor& a, const Tensor& b);

// Rows ids[i] of table[V x d].
Tensor gather_rows(const Tensor& table, std::span<const TokenId> ids);
// Rows [begin, begin + count) of x.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);

inline constexpr double kDefaultLayerNormEps = 1e-5;

// Per-row normalisation of x[s x d] followed by gamma * xhat + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = kDefaultLayerNormEps);

// tanh-approximated GELU, elementwise.
Tensor gelu(const Tensor& x);

// x[s x d] -> [h x s x d/h] and back.
Tensor split_heads(const Tensor& x, std::size_t n_heads);
Tensor merge_heads(const Tensor& x);

// scores[h,i,j] = factor * <q[h,i], k[h,j]> for j <= i, exactly 0 above the
// diagonal. q and k are [h x s x dh].
Tensor causal_scores(const Tensor& q, const Tensor& k, double factor);

// Row-wise softmax restricted to the causal prefix j <= i of the last two
// (square) dimensions. Masked entries are exactly 0. Accepts [s x s] or
// [h x s x s].
Tensor causal_softmax(const Tensor& scores);

// out[h,i] = sum_{j <= i} weights[h,i,j] * v[h,j].
Tensor causal_mix(const Tensor& weights, const Tensor& v);

// Mean over rows of -log softmax(logits[i])[targets[i]].
Tensor cross_entropy(const Tensor& logits, std::span<const TokenId> targets);

}  // namespace entlm
