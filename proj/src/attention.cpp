#include "attention.hpp"

#include <cmath>

#include "errors.hpp"
#include "ops.hpp"

namespace swinchex {

namespace {

Tensor project(const Tensor& x, const Tensor& w, const std::optional<Tensor>& b) {
  return linear(x, w, b ? &*b : nullptr);
}

}  // namespace

void MhaParams::validate() const {
  if (!wq.defined() || !wk.defined() || !wv.defined() || !wo.defined()) {
    throw ShapeError("attention projections are not initialized");
  }
  const std::size_t c = wq.dim(0);
  for (const Tensor* w : {&wq, &wk, &wv, &wo}) {
    if (w->rank() != 2 || w->dim(0) != c || w->dim(1) != c) {
      throw ShapeError("attention projection must be [C,C], got " + shape_str(w->shape()));
    }
  }
  if (num_heads == 0 || c % num_heads != 0) {
    throw ShapeError("channels " + std::to_string(c) + " not divisible by " +
                     std::to_string(num_heads) + " heads");
  }
}

Tensor scaled_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor* mask,
                        Tensor* weights) {
  if (q.rank() < 2 || q.shape() != k.shape() || v.rank() != q.rank() || v.dim(-2) != k.dim(-2)) {
    throw ShapeError("scaled_attention: incompatible Q " + shape_str(q.shape()) + ", K " +
                     shape_str(k.shape()) + ", V " + shape_str(v.shape()));
  }
  const std::size_t dk = q.dim(-1);
  Tensor scores = scale(matmul(q, transpose(k, k.rank() - 2, k.rank() - 1)),
                        1.0 / std::sqrt(static_cast<double>(dk)));
  if (mask) {
    const std::size_t n = q.dim(-2);
    const Tensor mask3 = mask->rank() == 2 ? reshape(*mask, Shape{1, n, n}) : *mask;
    scores = scores.rank() == 2
                 ? reshape(add_mask(reshape(scores, Shape{1, n, n}), mask3), Shape{n, n})
                 : add_mask(scores, mask3);
  }
  Tensor attn = softmax(scores, -1);
  if (weights) *weights = attn;
  return matmul(attn, v);
}

Tensor window_mha(const Tensor& tokens, const MhaParams& params, const Tensor* mask) {
  params.validate();
  if (tokens.rank() != 3 || tokens.dim(2) != params.channels()) {
    throw ShapeError("window_mha: tokens " + shape_str(tokens.shape()) +
                     " do not match channels " + std::to_string(params.channels()));
  }
  const std::size_t g = tokens.dim(0);
  const std::size_t n = tokens.dim(1);
  const std::size_t c = tokens.dim(2);
  const std::size_t heads = params.num_heads;
  const std::size_t d = c / heads;

  auto split_heads = [&](const Tensor& x) {
    return permute(reshape(x, Shape{g, n, heads, d}), {0, 2, 1, 3});  // [G, H, n, d]
  };
  Tensor q = split_heads(project(tokens, params.wq, params.bq));
  Tensor k = split_heads(project(tokens, params.wk, params.bk));
  Tensor v = split_heads(project(tokens, params.wv, params.bv));
  Tensor out = scaled_attention(q, k, v, mask);
  out = reshape(permute(out, {0, 2, 1, 3}), Shape{g, n, c});
  return project(out, params.wo, params.bo);
}

}  // namespace swinchex
