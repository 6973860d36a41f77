#include "complexity.hpp"

#include <limits>
#include <string>

#include "attention.hpp"
#include "errors.hpp"
#include "ops.hpp"
#include "rng.hpp"
#include "windowing.hpp"

namespace swinchex {

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
    throw ShapeError("complexity count overflows 64 bits");
  }
  return a * b;
}

std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  if (b > std::numeric_limits<std::uint64_t>::max() - a) {
    throw ShapeError("complexity count overflows 64 bits");
  }
  return a + b;
}

void require_positive(const ComplexityQuery& q) {
  if (q.h == 0 || q.w == 0 || q.channels == 0) {
    throw ShapeError("complexity query needs positive h, w and C");
  }
}

Tensor random_tensor(Shape shape, SplitMix64& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

std::uint64_t omega_msa(const ComplexityQuery& q) {
  require_positive(q);
  const std::uint64_t hw = checked_mul(q.h, q.w);
  const std::uint64_t proj = checked_mul(4, checked_mul(hw, checked_mul(q.channels, q.channels)));
  const std::uint64_t attn = checked_mul(2, checked_mul(checked_mul(hw, hw), q.channels));
  return checked_add(proj, attn);
}

std::uint64_t omega_wmsa(const ComplexityQuery& q) {
  require_positive(q);
  if (q.window == 0 || q.h % q.window != 0 || q.w % q.window != 0) {
    throw ShapeError("W-MSA: " + std::to_string(q.h) + "x" + std::to_string(q.w) +
                     " grid is not divisible by window " + std::to_string(q.window));
  }
  const std::uint64_t hw = checked_mul(q.h, q.w);
  const std::uint64_t proj = checked_mul(4, checked_mul(hw, checked_mul(q.channels, q.channels)));
  const std::uint64_t attn =
      checked_mul(2, checked_mul(checked_mul(q.window, q.window), checked_mul(hw, q.channels)));
  return checked_add(proj, attn);
}

std::uint64_t measure_attention_macs(const ComplexityQuery& q, AttentionMode mode,
                                     std::size_t num_heads) {
  require_positive(q);
  if (mode == AttentionMode::windowed) {
    WindowGrid{q.h, q.w, q.window, 0}.validate();
  }
  SplitMix64 rng(q.h * 1000003 + q.w * 1009 + q.channels);
  const std::size_t c = q.channels;
  MhaParams params;
  params.wq = random_tensor({c, c}, rng);
  params.wk = random_tensor({c, c}, rng);
  params.wv = random_tensor({c, c}, rng);
  params.wo = random_tensor({c, c}, rng);
  params.num_heads = num_heads;
  Tensor map = random_tensor({q.h, q.w, c}, rng);

  NoGradGuard no_grad;
  Tensor tokens = mode == AttentionMode::windowed ? window_partition(map, q.window)
                                                  : reshape(map, Shape{1, q.h * q.w, c});
  MacCounter counter;
  window_mha(tokens, params);
  return counter.count();
}

}  // namespace swinchex
