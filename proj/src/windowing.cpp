#include "windowing.hpp"

#include <memory>
#include <vector>

#include "errors.hpp"
#include "ops.hpp"

namespace swinchex {

namespace {

struct MapDims {
  std::size_t batch;
  std::size_t height;
  std::size_t width;
  std::size_t channels;
  bool batched;
};

MapDims map_dims(const Tensor& x, const char* op) {
  if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2), false};
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3), true};
  throw ShapeError(std::string(op) + ": expected [h,w,C] or [B,h,w,C], got " +
                   shape_str(x.shape()));
}

// For every element of the window layout, its flat offset in the map layout.
std::vector<std::size_t> window_index(std::size_t batch, std::size_t h, std::size_t w,
                                      std::size_t c, std::size_t m) {
  std::vector<std::size_t> index;
  index.reserve(batch * h * w * c);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t wy = 0; wy < h / m; ++wy)
      for (std::size_t wx = 0; wx < w / m; ++wx)
        for (std::size_t ty = 0; ty < m; ++ty)
          for (std::size_t tx = 0; tx < m; ++tx) {
            const std::size_t base = ((b * h + wy * m + ty) * w + wx * m + tx) * c;
            for (std::size_t k = 0; k < c; ++k) index.push_back(base + k);
          }
  return index;
}

}  // namespace

void WindowGrid::validate() const {
  if (height == 0 || width == 0 || window == 0) throw ShapeError("window grid dims must be positive");
  if (height % window != 0 || width % window != 0) {
    throw ShapeError("grid " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by window " + std::to_string(window));
  }
  if (shift >= window) throw ShapeError("window shift must be smaller than the window");
}

Tensor window_partition(const Tensor& x, std::size_t m) {
  const MapDims d = map_dims(x, "window_partition");
  WindowGrid{d.height, d.width, m, 0}.validate();
  const std::size_t nw = (d.height / m) * (d.width / m);
  auto index = std::make_shared<std::vector<std::size_t>>(
      window_index(d.batch, d.height, d.width, d.channels, m));
  return gather(x, Shape{d.batch * nw, m * m, d.channels}, std::move(index));
}

Tensor window_reverse(const Tensor& windows, std::size_t m, std::size_t batch, std::size_t height,
                      std::size_t width) {
  WindowGrid{height, width, m, 0}.validate();
  const std::size_t nw = (height / m) * (width / m);
  if (windows.rank() != 3 || windows.dim(0) != batch * nw || windows.dim(1) != m * m) {
    throw ShapeError("window_reverse: " + shape_str(windows.shape()) + " does not hold " +
                     std::to_string(batch) + "x" + std::to_string(nw) + " windows of " +
                     std::to_string(m) + "x" + std::to_string(m) + " tokens");
  }
  const std::size_t c = windows.dim(2);
  const auto forward = window_index(batch, height, width, c, m);
  auto index = std::make_shared<std::vector<std::size_t>>(forward.size());
  for (std::size_t i = 0; i < forward.size(); ++i) (*index)[forward[i]] = i;
  return gather(windows, Shape{batch, height, width, c}, std::move(index));
}

Tensor window_reverse(const Tensor& windows, std::size_t m, std::size_t height, std::size_t width) {
  Tensor out = window_reverse(windows, m, 1, height, width);
  return reshape(out, Shape{height, width, windows.dim(-1)});
}

Tensor cyclic_shift(const Tensor& x, std::ptrdiff_t dy, std::ptrdiff_t dx) {
  const MapDims d = map_dims(x, "cyclic_shift");
  const auto h = static_cast<std::ptrdiff_t>(d.height);
  const auto w = static_cast<std::ptrdiff_t>(d.width);
  const std::ptrdiff_t sy = ((dy % h) + h) % h;
  const std::ptrdiff_t sx = ((dx % w) + w) % w;
  auto index = std::make_shared<std::vector<std::size_t>>();
  index->reserve(x.numel());
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::ptrdiff_t i = 0; i < h; ++i)
      for (std::ptrdiff_t j = 0; j < w; ++j) {
        const auto si = static_cast<std::size_t>((i + sy) % h);
        const auto sj = static_cast<std::size_t>((j + sx) % w);
        const std::size_t base = ((b * d.height + si) * d.width + sj) * d.channels;
        for (std::size_t k = 0; k < d.channels; ++k) index->push_back(base + k);
      }
  return gather(x, x.shape(), std::move(index));
}

std::vector<int> shift_region_ids(const WindowGrid& grid) {
  grid.validate();
  auto band = [&](std::size_t pos, std::size_t extent) {
    if (pos < extent - grid.window) return 0;
    if (pos < extent - grid.shift) return 1;
    return 2;
  };
  std::vector<int> ids(grid.height * grid.width);
  for (std::size_t i = 0; i < grid.height; ++i)
    for (std::size_t j = 0; j < grid.width; ++j)
      ids[i * grid.width + j] = band(i, grid.height) * 3 + band(j, grid.width);
  return ids;
}

Tensor build_shift_mask(const WindowGrid& grid) {
  grid.validate();
  const std::size_t m = grid.window;
  const std::size_t n = m * m;
  const std::size_t nw = grid.num_windows();
  Tensor mask(Shape{nw, n, n}, 0.0);
  if (grid.shift == 0) return mask;

  const auto ids = shift_region_ids(grid);
  auto values = mask.mutable_data();
  const std::size_t windows_x = grid.width / m;
  for (std::size_t win = 0; win < nw; ++win) {
    const std::size_t y0 = (win / windows_x) * m;
    const std::size_t x0 = (win % windows_x) * m;
    std::vector<int> local(n);
    for (std::size_t t = 0; t < n; ++t) local[t] = ids[(y0 + t / m) * grid.width + x0 + t % m];
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        values[(win * n + a) * n + b] = local[a] == local[b] ? 0.0 : kMaskedScore;
  }
  return mask;
}

}  // namespace swinchex
