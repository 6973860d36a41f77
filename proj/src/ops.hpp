#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "tensor.hpp"

namespace swinchex {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// x[..., C] + bias[C]
Tensor add_bias(const Tensor& x, const Tensor& bias);

// a[..., m, k] x b[..., k, n]. b may also be a plain matrix shared by every
// leading index of a.
Tensor matmul(const Tensor& a, const Tensor& b);
// x[..., in] * weight[in, out] (+ bias[out]).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias = nullptr);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor transpose(const Tensor& x, std::size_t axis0, std::size_t axis1);
// out[i] = x.data[index[i]]; gradients scatter-add back.
Tensor gather(const Tensor& x, Shape shape, std::shared_ptr<const std::vector<std::size_t>> index);
Tensor concat(const std::vector<Tensor>& parts, std::ptrdiff_t axis);

Tensor softmax(const Tensor& x, std::ptrdiff_t axis = -1);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

enum class Activation { gelu, relu };
Tensor activate(const Tensor& x, Activation kind);

// Non-overlapping window x window mean over the spatial dims of
// x[B, h, w, C] (or x[h, w, C]).
Tensor avg_pool2d(const Tensor& x, std::size_t window);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// scores[G, ..., n, n] + mask[nw, n, n], where score group g takes mask g % nw.
// The mask is a constant.
Tensor add_mask(const Tensor& scores, const Tensor& mask);

}  // namespace swinchex
