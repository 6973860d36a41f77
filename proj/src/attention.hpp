#pragma once

#include <cstddef>
#include <optional>

#include "tensor.hpp"

namespace swinchex {

// Projections of one multi-head attention layer. Weights are [C, C] and map
// row vectors (y = x W). d_k = d_v = C / num_heads.
struct MhaParams {
  Tensor wq, wk, wv, wo;
  std::optional<Tensor> bq, bk, bv, bo;
  std::size_t num_heads = 1;

  std::size_t channels() const { return wq.dim(0); }
  void validate() const;
};

// Softmax(Q K^T / sqrt(d_k) + mask) V with q, k [..., n, d_k] and v [..., n, d_v].
// mask is [n, n] or [nw, n, n] (leading index g of q uses mask g % nw).
// When weights is given it receives the attention weights [..., n, n].
Tensor scaled_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const Tensor* mask = nullptr, Tensor* weights = nullptr);

// Multi-head attention applied independently to every window of
// tokens[G, n, C]. With a mask [nw, n, n], window g uses mask g % nw.
Tensor window_mha(const Tensor& tokens, const MhaParams& params, const Tensor* mask = nullptr);

}  // namespace swinchex
