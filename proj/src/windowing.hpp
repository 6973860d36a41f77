#pragma once

#include <cstddef>

#include "tensor.hpp"

namespace swinchex {

// Additive mask value for blocked token pairs. Finite so that gradients stay
// finite; exp(-1e9) underflows to an exact zero weight.
inline constexpr double kMaskedScore = -1e9;

struct WindowGrid {
  std::size_t height = 0;  // tokens
  std::size_t width = 0;   // tokens
  std::size_t window = 0;  // M
  std::size_t shift = 0;   // 0 or M / 2

  void validate() const;
  std::size_t num_windows() const { return (height / window) * (width / window); }
  std::size_t tokens_per_window() const { return window * window; }
};

// x[h, w, C] -> [nw, M*M, C] or x[B, h, w, C] -> [B*nw, M*M, C]. Windows are
// ordered row-major over the window grid, tokens row-major inside a window.
Tensor window_partition(const Tensor& x, std::size_t window);

// Inverse of window_partition: [nw, M*M, C] -> [h, w, C].
Tensor window_reverse(const Tensor& windows, std::size_t window, std::size_t height,
                      std::size_t width);
// Batched inverse: [B*nw, M*M, C] -> [B, h, w, C].
Tensor window_reverse(const Tensor& windows, std::size_t window, std::size_t batch,
                      std::size_t height, std::size_t width);

// out[i][j] = x[(i + dy) mod h][(j + dx) mod w], on [h, w, C] or [B, h, w, C].
Tensor cyclic_shift(const Tensor& x, std::ptrdiff_t dy, std::ptrdiff_t dx);

// Region id of every token of the shifted map, row-major [h * w]. Rows are
// cut into [0, h-M), [h-M, h-s), [h-s, h) and columns likewise; the id is
// row_band * 3 + col_band.
std::vector<int> shift_region_ids(const WindowGrid& grid);

// [nw, M*M, M*M] additive mask in the shifted frame: 0 where both tokens of a
// window share a region id, kMaskedScore otherwise. All zeros when shift == 0.
Tensor build_shift_mask(const WindowGrid& grid);

}  // namespace swinchex
