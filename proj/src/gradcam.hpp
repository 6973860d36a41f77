#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "model.hpp"
#include "tensor.hpp"

namespace swinchex {

struct Heatmap {
  Tensor values;  // [H, W] in [0, 1]
  Tensor coarse;  // [hf, wf] normalized map before upsampling
  std::size_t target_class = 0;
  bool dominant = false;  // target picked as the largest logit
  std::vector<double> logits;
};

// Grad-CAM on the activation after the first LayerNorm of the last block.
// Without target_class the largest pre-sigmoid logit is used (earliest index
// on ties). The map is ReLU(sum_c mean_spatial(dlogit/dA_c) * A_c), divided
// by its maximum (an all-zero map stays zero) and bilinearly upsampled.
Heatmap grad_cam(SwinModel& model, const Tensor& image,
                 std::optional<std::size_t> target_class = std::nullopt);

// Index of the largest value; earliest index wins ties.
std::size_t dominant_index(std::span<const double> values);

// Bilinear resize of a single-channel map (half-pixel centres, clamped edges).
std::vector<double> resize_bilinear(std::span<const double> map, std::size_t height,
                                    std::size_t width, std::size_t out_height,
                                    std::size_t out_width);

// Jet colormap, v in [0, 1] -> RGB in [0, 1].
std::array<double, 3> jet(double v);
inline constexpr double kOverlayAlpha = 0.5;

// Writes the original image and the colormap overlay side by side as an RGB
// PNG of size (2W) x H. image is [H, W, 3] in [0, 1].
void render_heatmap(const Tensor& map, const Tensor& image, const std::string& out_path);

}  // namespace swinchex
