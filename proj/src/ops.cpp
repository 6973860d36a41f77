#include "ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "errors.hpp"

namespace swinchex {

namespace {

using Node = Tensor::Node;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

std::size_t normalize_axis(std::ptrdiff_t axis, std::size_t rank) {
  const auto r = static_cast<std::ptrdiff_t>(rank);
  const std::ptrdiff_t a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw ShapeError("axis " + std::to_string(axis) + " out of range");
  return static_cast<std::size_t>(a);
}

// Calls fn(input_node, grad_buffer) when the input needs a gradient.
template <typename Fn>
void with_grad(Node& self, std::size_t i, Fn&& fn) {
  Node* in = self.inputs[i].get();
  if (in->requires_grad) fn(*in, in->ensure_grad());
}

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& x, Forward f, Derivative df) {
  auto src = x.data();
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = f(src[i]);
  return make_result(x.shape(), std::move(out), {x}, [df](Node& self) {
    with_grad(self, 0, [&](Node& in, std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += self.grad[i] * df(in.data[i], self.data[i]);
      }
    });
  });
}

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA[m,k] += dC[m,n] * B[k,n]^T
void gemm_nt(const double* dc, const double* b, double* da, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* drow = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += drow[j] * brow[j];
      da[i * k + p] += acc;
    }
  }
}

// dB[k,n] += A[m,k]^T * dC[m,n]
void gemm_tn(const double* a, const double* dc, double* db, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* drow = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* dbrow = db + p * n;
      for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * drow[j];
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      with_grad(self, k, [&](Node&, std::vector<double>& g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      });
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    with_grad(self, 0, [&](Node&, std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
    with_grad(self, 1, [&](Node&, std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    });
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& xa = self.inputs[0]->data;
    const auto& xb = self.inputs[1]->data;
    with_grad(self, 0, [&](Node&, std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * xb[i];
    });
    with_grad(self, 1, [&](Node&, std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * xa[i];
    });
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.rank() == 0 || x.dim(-1) != bias.dim(0)) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                     shape_str(x.shape()));
  }
  const std::size_t c = bias.dim(0);
  auto xs = x.data();
  auto bs = bias.data();
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xs[i] + bs[i % c];
  return make_result(x.shape(), std::move(out), {x, bias}, [c](Node& self) {
    with_grad(self, 0, [&](Node&, std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
    with_grad(self, 1, [&](Node&, std::vector<double>& g) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % c] += self.grad[i];
    });
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError("matmul: operands need rank >= 2, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(-2);
  const std::size_t k = a.dim(-1);
  const std::size_t n = b.dim(-1);
  const Shape lead_a(a.shape().begin(), a.shape().end() - 2);
  const Shape lead_b(b.shape().begin(), b.shape().end() - 2);
  const bool shared_b = lead_b.empty();
  if (b.dim(-2) != k || (!shared_b && lead_a != lead_b)) {
    throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const std::size_t batch = shape_numel(lead_a);
  Shape out_shape = lead_a;
  out_shape.push_back(m);
  out_shape.push_back(n);

  std::vector<double> out(batch * m * n, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t s = 0; s < batch; ++s) {
    gemm_nn(ad + s * m * k, bd + (shared_b ? 0 : s * k * n), out.data() + s * m * n, m, k, n);
  }
  record_macs(static_cast<std::uint64_t>(batch) * m * k * n);

  return make_result(std::move(out_shape), std::move(out), {a, b},
                     [batch, m, k, n, shared_b](Node& self) {
                       const double* ad = self.inputs[0]->data.data();
                       const double* bd = self.inputs[1]->data.data();
                       const double* dc = self.grad.data();
                       with_grad(self, 0, [&](Node&, std::vector<double>& g) {
                         for (std::size_t s = 0; s < batch; ++s) {
                           gemm_nt(dc + s * m * n, bd + (shared_b ? 0 : s * k * n),
                                   g.data() + s * m * k, m, k, n);
                         }
                       });
                       with_grad(self, 1, [&](Node&, std::vector<double>& g) {
                         for (std::size_t s = 0; s < batch; ++s) {
                           gemm_tn(ad + s * m * k, dc + s * m * n,
                                   g.data() + (shared_b ? 0 : s * k * n), m, k, n);
                         }
                       });
                     });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias) {
  if (weight.rank() != 2 || x.rank() == 0 || x.dim(-1) != weight.dim(0)) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                     shape_str(weight.shape()));
  }
  const std::size_t in = weight.dim(0);
  const std::size_t out = weight.dim(1);
  Shape flat{x.numel() / in, in};
  Tensor y = matmul(reshape(x, flat), weight);
  if (bias) y = add_bias(y, *bias);
  Shape out_shape = x.shape();
  out_shape.back() = out;
  return reshape(y, std::move(out_shape));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  auto src = x.data();
  return make_result(std::move(shape), std::vector<double>(src.begin(), src.end()), {x},
                     [](Node& self) {
                       with_grad(self, 0, [&](Node&, std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                       });
                     });
}

Tensor gather(const Tensor& x, Shape shape, std::shared_ptr<const std::vector<std::size_t>> index) {
  if (shape_numel(shape) != index->size()) {
    throw ShapeError("gather: index length does not match " + shape_str(shape));
  }
  auto src = x.data();
  std::vector<double> out(index->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[(*index)[i]];
  return make_result(std::move(shape), std::move(out), {x}, [index](Node& self) {
    with_grad(self, 0, [&](Node&, std::vector<double>& g) {
      for (std::size_t i = 0; i < index->size(); ++i) g[(*index)[i]] += self.grad[i];
    });
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const Shape& in = x.shape();
  const std::size_t r = in.size();
  if (axes.size() != r) throw ShapeError("permute: axes do not match rank of " + shape_str(in));
  std::vector<bool> used(r, false);
  for (std::size_t a : axes) {
    if (a >= r || used[a]) throw ShapeError("permute: invalid axis list");
    used[a] = true;
  }
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  Shape out(r);
  std::vector<std::size_t> strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    out[i] = in[axes[i]];
    strides[i] = in_strides[axes[i]];
  }
  auto index = std::make_shared<std::vector<std::size_t>>(x.numel());
  std::vector<std::size_t> pos(r, 0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < index->size(); ++i) {
    (*index)[i] = offset;
    for (std::size_t d = r; d-- > 0;) {
      offset += strides[d];
      if (++pos[d] < out[d]) break;
      offset -= strides[d] * out[d];
      pos[d] = 0;
    }
  }
  return gather(x, std::move(out), std::move(index));
}

Tensor transpose(const Tensor& x, std::size_t axis0, std::size_t axis1) {
  std::vector<std::size_t> axes(x.rank());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  if (axis0 >= axes.size() || axis1 >= axes.size()) throw ShapeError("transpose: axis out of range");
  std::swap(axes[axis0], axes[axis1]);
  return permute(x, axes);
}

Tensor concat(const std::vector<Tensor>& parts, std::ptrdiff_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  const std::size_t ax = normalize_axis(axis, first.size());
  Shape out_shape = first;
  out_shape[ax] = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch");
    const std::size_t len = s[ax];
    s[ax] = first[ax];
    if (s != first) {
      throw ShapeError("concat: incompatible shapes " + shape_str(first) + " and " +
                       shape_str(p.shape()));
    }
    out_shape[ax] += len;
    widths.push_back(len);
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= first[i];
  std::size_t inner = 1;
  for (std::size_t i = ax + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t row = out_shape[ax] * inner;

  std::vector<double> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto src = parts[p].data();
    const std::size_t chunk = widths[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * row + offset));
    }
    offset += chunk;
  }
  return make_result(std::move(out_shape), std::move(out), parts,
                     [widths, outer, inner, row](Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t p = 0; p < widths.size(); ++p) {
                         const std::size_t chunk = widths[p] * inner;
                         with_grad(self, p, [&](Node&, std::vector<double>& g) {
                           for (std::size_t o = 0; o < outer; ++o) {
                             for (std::size_t j = 0; j < chunk; ++j) {
                               g[o * chunk + j] += self.grad[o * row + offset + j];
                             }
                           }
                         });
                         offset += chunk;
                       }
                     });
}

Tensor softmax(const Tensor& x, std::ptrdiff_t axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const Shape& s = x.shape();
  std::size_t outer = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
  const std::size_t len = s[ax];
  std::size_t inner = 1;
  for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];

  auto src = x.data();
  std::vector<double> out(src.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, src[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(src[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= total;
    }
  }
  return make_result(s, std::move(out), {x}, [outer, len, inner](Node& self) {
    with_grad(self, 0, [&](Node&, std::vector<double>& g) {
      const auto& y = self.data;
      const auto& dy = self.grad;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          double dot = 0.0;
          for (std::size_t j = 0; j < len; ++j) {
            dot += dy[base + j * inner] * y[base + j * inner];
          }
          for (std::size_t j = 0; j < len; ++j) {
            const std::size_t i = base + j * inner;
            g[i] += y[i] * (dy[i] - dot);
          }
        }
      }
    });
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0 || gamma.rank() != 1 || beta.rank() != 1 || gamma.dim(0) != x.dim(-1) ||
      beta.dim(0) != x.dim(-1)) {
    throw ShapeError("layer_norm: affine params " + shape_str(gamma.shape()) + "/" +
                     shape_str(beta.shape()) + " do not match input " + shape_str(x.shape()));
  }
  const std::size_t c = x.dim(-1);
  const std::size_t rows = x.numel() / c;
  auto src = x.data();
  auto gm = gamma.data();
  auto bt = beta.data();
  auto xhat = std::make_shared<std::vector<double>>(src.size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(src.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = src.data() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (row[j] - mu) * rs;
      (*xhat)[r * c + j] = h;
      out[r * c + j] = h * gm[j] + bt[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [c, rows, xhat, rstd](Node& self) {
                       const auto& dy = self.grad;
                       const auto& gm = self.inputs[1]->data;
                       with_grad(self, 0, [&](Node&, std::vector<double>& g) {
                         const double inv_c = 1.0 / static_cast<double>(c);
                         for (std::size_t r = 0; r < rows; ++r) {
                           double mean_d = 0.0;
                           double mean_dh = 0.0;
                           for (std::size_t j = 0; j < c; ++j) {
                             const double d = dy[r * c + j] * gm[j];
                             mean_d += d;
                             mean_dh += d * (*xhat)[r * c + j];
                           }
                           mean_d *= inv_c;
                           mean_dh *= inv_c;
                           for (std::size_t j = 0; j < c; ++j) {
                             const double d = dy[r * c + j] * gm[j];
                             g[r * c + j] +=
                                 (*rstd)[r] * (d - mean_d - (*xhat)[r * c + j] * mean_dh);
                           }
                         }
                       });
                       with_grad(self, 1, [&](Node&, std::vector<double>& g) {
                         for (std::size_t i = 0; i < dy.size(); ++i) g[i % c] += dy[i] * (*xhat)[i];
                       });
                       with_grad(self, 2, [&](Node&, std::vector<double>& g) {
                         for (std::size_t i = 0; i < dy.size(); ++i) g[i % c] += dy[i];
                       });
                     });
}

Tensor gelu(const Tensor& x) {
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * v * v) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
        return cdf + v * pdf;
      });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor activate(const Tensor& x, Activation kind) {
  return kind == Activation::gelu ? gelu(x) : relu(x);
}

Tensor avg_pool2d(const Tensor& x, std::size_t window) {
  if (x.rank() != 3 && x.rank() != 4) {
    throw ShapeError("avg_pool2d: expected [B,h,w,C] or [h,w,C], got " + shape_str(x.shape()));
  }
  const bool batched = x.rank() == 4;
  const std::size_t b = batched ? x.dim(0) : 1;
  const std::size_t h = x.dim(-3);
  const std::size_t w = x.dim(-2);
  const std::size_t c = x.dim(-1);
  if (window == 0 || h % window != 0 || w % window != 0) {
    throw ShapeError("avg_pool2d: window " + std::to_string(window) + " does not tile " +
                     shape_str(x.shape()));
  }
  const std::size_t oh = h / window;
  const std::size_t ow = w / window;
  const double inv = 1.0 / static_cast<double>(window * window);
  Shape out_shape = batched ? Shape{b, oh, ow, c} : Shape{oh, ow, c};
  auto src = x.data();
  std::vector<double> out(b * oh * ow * c, 0.0);
  auto visit = [=](auto&& fn) {
    for (std::size_t n = 0; n < b; ++n)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const std::size_t in_base = ((n * h + i) * w + j) * c;
          const std::size_t out_base = ((n * oh + i / window) * ow + j / window) * c;
          for (std::size_t k = 0; k < c; ++k) fn(in_base + k, out_base + k);
        }
  };
  visit([&](std::size_t i, std::size_t o) { out[o] += src[i]; });
  for (double& v : out) v *= inv;
  return make_result(std::move(out_shape), std::move(out), {x}, [visit, inv](Node& self) {
    with_grad(self, 0, [&](Node&, std::vector<double>& g) {
      visit([&](std::size_t i, std::size_t o) { g[i] += self.grad[o] * inv; });
    });
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result(Shape{}, {total}, {x}, [](Node& self) {
    with_grad(self, 0, [&](Node&, std::vector<double>& g) {
      for (double& v : g) v += self.grad[0];
    });
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor add_mask(const Tensor& scores, const Tensor& mask) {
  if (mask.rank() != 3 || scores.rank() < 3 || scores.dim(-1) != mask.dim(2) ||
      scores.dim(-2) != mask.dim(1) || scores.dim(0) % mask.dim(0) != 0) {
    throw ShapeError("add_mask: mask " + shape_str(mask.shape()) + " does not fit scores " +
                     shape_str(scores.shape()));
  }
  const std::size_t nw = mask.dim(0);
  const std::size_t nn = mask.dim(1) * mask.dim(2);
  const std::size_t group = scores.numel() / scores.dim(0);  // per leading index
  auto src = scores.data();
  auto m = mask.data();
  std::vector<double> out(src.size());
  for (std::size_t g = 0; g < scores.dim(0); ++g) {
    const double* mw = m.data() + (g % nw) * nn;
    for (std::size_t i = 0; i < group; ++i) {
      out[g * group + i] = src[g * group + i] + mw[i % nn];
    }
  }
  return make_result(scores.shape(), std::move(out), {scores}, [](Node& self) {
    with_grad(self, 0, [&](Node&, std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
  });
}

}  // namespace swinchex
