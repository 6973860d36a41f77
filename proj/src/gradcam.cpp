#include "gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "errors.hpp"
#include "ops.hpp"
#include "png_io.hpp"

namespace swinchex {

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void normalize_by_max(std::vector<double>& values) {
  const double mx = values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
  if (!(mx > 0.0)) {
    std::fill(values.begin(), values.end(), 0.0);
    return;
  }
  for (double& v : values) v /= mx;
}

}  // namespace

std::size_t dominant_index(std::span<const double> values) {
  if (values.empty()) throw ShapeError("dominant_index: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::vector<double> resize_bilinear(std::span<const double> map, std::size_t h, std::size_t w,
                                    std::size_t oh, std::size_t ow) {
  if (map.size() != h * w || h == 0 || w == 0) throw ShapeError("resize_bilinear: bad map size");
  std::vector<double> out(oh * ow);
  auto coord = [](std::size_t i, std::size_t in, std::size_t outn, std::size_t& lo,
                  std::size_t& hi, double& f) {
    double c = (static_cast<double>(i) + 0.5) * static_cast<double>(in) / static_cast<double>(outn) - 0.5;
    c = std::clamp(c, 0.0, static_cast<double>(in - 1));
    lo = static_cast<std::size_t>(std::floor(c));
    hi = std::min(lo + 1, in - 1);
    f = c - static_cast<double>(lo);
  };
  for (std::size_t y = 0; y < oh; ++y) {
    std::size_t y0, y1;
    double fy;
    coord(y, h, oh, y0, y1, fy);
    for (std::size_t x = 0; x < ow; ++x) {
      std::size_t x0, x1;
      double fx;
      coord(x, w, ow, x0, x1, fx);
      const double top = map[y0 * w + x0] + fx * (map[y0 * w + x1] - map[y0 * w + x0]);
      const double bottom = map[y1 * w + x0] + fx * (map[y1 * w + x1] - map[y1 * w + x0]);
      out[y * ow + x] = top + fy * (bottom - top);
    }
  }
  return out;
}

Heatmap grad_cam(SwinModel& model, const Tensor& image, std::optional<std::size_t> target_class) {
  const std::size_t classes = model.config().num_classes;
  if (target_class && *target_class >= classes) {
    throw ShapeError("grad_cam: class index " + std::to_string(*target_class) +
                     " out of range (0.." + std::to_string(classes - 1) + ")");
  }
  if (image.rank() != 3) throw ShapeError("grad_cam: expected one [H,W,3] image");
  const std::size_t height = image.dim(0);
  const std::size_t width = image.dim(1);

  ForwardTrace trace;
  Tensor logits = model.logits(reshape(image, Shape{1, height, width, image.dim(2)}), &trace);
  Heatmap heat;
  heat.logits.assign(logits.data().begin(), logits.data().end());
  heat.dominant = !target_class;
  heat.target_class = target_class ? *target_class : dominant_index(heat.logits);

  const Tensor& activation = trace.last_block_norm1;  // [1, hf, wf, Cf]
  const std::size_t hf = activation.dim(1);
  const std::size_t wf = activation.dim(2);
  const std::size_t cf = activation.dim(3);

  model.params().zero_grad();
  Tensor target = gather(logits, Shape{},
                         std::make_shared<const std::vector<std::size_t>>(
                             std::vector<std::size_t>{heat.target_class}));
  target.backward();
  const std::vector<double> grad = activation.grad_vector();
  model.params().zero_grad();

  auto a = activation.data();
  std::vector<double> alpha(cf, 0.0);
  for (std::size_t i = 0; i < hf * wf; ++i)
    for (std::size_t c = 0; c < cf; ++c) alpha[c] += grad[i * cf + c];
  for (double& v : alpha) v /= static_cast<double>(hf * wf);

  std::vector<double> coarse(hf * wf);
  for (std::size_t i = 0; i < hf * wf; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < cf; ++c) s += alpha[c] * a[i * cf + c];
    coarse[i] = std::max(s, 0.0);
  }
  normalize_by_max(coarse);
  std::vector<double> full = resize_bilinear(coarse, hf, wf, height, width);
  normalize_by_max(full);

  heat.coarse = Tensor(Shape{hf, wf}, std::move(coarse));
  heat.values = Tensor(Shape{height, width}, std::move(full));
  return heat;
}

std::array<double, 3> jet(double v) {
  v = std::clamp(v, 0.0, 1.0);
  auto ramp = [](double x) { return std::clamp(1.5 - std::abs(x), 0.0, 1.0); };
  return {ramp(4.0 * v - 3.0), ramp(4.0 * v - 2.0), ramp(4.0 * v - 1.0)};
}

void render_heatmap(const Tensor& map, const Tensor& image, const std::string& out_path) {
  if (map.rank() != 2 || image.rank() != 3 || image.dim(2) != 3 || map.dim(0) != image.dim(0) ||
      map.dim(1) != image.dim(1)) {
    throw ShapeError("render_heatmap: map " + shape_str(map.shape()) + " does not match image " +
                     shape_str(image.shape()));
  }
  const std::size_t h = image.dim(0);
  const std::size_t w = image.dim(1);
  Image8 out;
  out.width = 2 * w;
  out.height = h;
  out.channels = 3;
  out.pixels.resize(out.width * h * 3);
  auto px = image.data();
  auto mv = map.data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const auto color = jet(mv[y * w + x]);
      for (std::size_t c = 0; c < 3; ++c) {
        const double orig = px[(y * w + x) * 3 + c];
        out.at(y, x, c) = to_byte(orig);
        out.at(y, w + x, c) = to_byte((1.0 - kOverlayAlpha) * orig + kOverlayAlpha * color[c]);
      }
    }
  }
  write_png(out_path, out);
}

}  // namespace swinchex
