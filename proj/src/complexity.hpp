#pragma once

#include <cstddef>
#include <cstdint>

namespace swinchex {

struct ComplexityQuery {
  std::uint64_t h = 0;
  std::uint64_t w = 0;
  std::uint64_t channels = 0;
  std::uint64_t window = 0;  // W-MSA only
};

// Global multi-head self-attention: 4hwC^2 + 2(hw)^2 C.
std::uint64_t omega_msa(const ComplexityQuery& q);
// Window attention with M x M windows: 4hwC^2 + 2 M^2 hw C.
std::uint64_t omega_wmsa(const ComplexityQuery& q);

enum class AttentionMode { global, windowed };

// Runs window_mha on a random h x w x C map under a MacCounter and returns the
// multiply-accumulates spent in the projections, Q K^T and weights x V.
// Global mode attends over the whole map as a single window.
std::uint64_t measure_attention_macs(const ComplexityQuery& q, AttentionMode mode,
                                     std::size_t num_heads = 1);

}  // namespace swinchex
