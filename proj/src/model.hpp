#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "attention.hpp"
#include "ops.hpp"
#include "tensor.hpp"

namespace swinchex {

enum class HeadVariant { headless, mlp1, mlp2, mlp3 };

std::string to_string(HeadVariant variant);
HeadVariant parse_head_variant(const std::string& name);
// Column label used in reports ("headless", "1-layer head", ...).
std::string head_variant_label(HeadVariant variant);
std::vector<std::size_t> default_head_widths(HeadVariant variant);

std::string to_string(Activation kind);
Activation parse_activation(const std::string& name);

struct ModelConfig {
  std::size_t image_size = 32;
  std::size_t patch_size = 2;
  std::size_t in_channels = 3;
  std::size_t embed_dim = 16;
  std::vector<std::size_t> depths{2, 2, 2, 2};
  std::vector<std::size_t> num_heads{1, 2, 4, 8};
  std::size_t window = 4;
  double mlp_ratio = 4.0;
  HeadVariant head_variant = HeadVariant::mlp3;
  std::vector<std::size_t> head_widths;  // empty: variant default
  std::size_t num_classes = 14;
  bool qkv_bias = false;
  Activation block_activation = Activation::gelu;
  Activation head_activation = Activation::relu;
  double layer_norm_eps = 1e-5;
  double init_std = 0.02;

  // Swin-L layout at 224 px: P=4, C=192, depths [2,2,18,2], M=7.
  static ModelConfig swin_large();

  void validate() const;

  std::size_t num_stages() const { return depths.size(); }
  // Tokens per side in stage s.
  std::size_t stage_resolution(std::size_t stage) const;
  std::size_t stage_channels(std::size_t stage) const;
  // A stage whose map is no larger than M uses one window covering the map
  // and no shift.
  std::size_t stage_window(std::size_t stage) const;
  std::size_t block_shift(std::size_t stage, std::size_t block) const;
  std::size_t final_channels() const { return stage_channels(num_stages() - 1); }
  std::size_t final_resolution() const { return stage_resolution(num_stages() - 1); }
  std::size_t mlp_hidden(std::size_t channels) const;
  std::vector<std::size_t> resolved_head_widths() const;
};

// Views into a ParamSet for one transformer block.
struct BlockParams {
  Tensor norm1_gamma, norm1_beta;
  MhaParams attn;
  Tensor norm2_gamma, norm2_beta;
  Tensor fc1_weight, fc1_bias, fc2_weight, fc2_bias;
};

BlockParams block_params(const ParamSet& params, const std::string& prefix,
                         std::size_t num_heads);

// images[B, H, W, 3] (or [H, W, 3]) -> tokens[B, H/P, W/P, C]: every P x P x 3
// patch is flattened (row, column, channel) and projected by weight[3P^2, C].
Tensor patch_embed(const Tensor& images, const Tensor& weight, const Tensor& bias,
                   std::size_t patch);

struct BlockOptions {
  std::size_t window = 0;
  std::size_t shift = 0;
  Activation activation = Activation::gelu;
  double eps = 1e-5;
};

// One pre-norm block on z[B, h, w, C]:
//   z' = (S)W-MSA(LN(z)) + z;  out = MLP(LN(z')) + z'
// With shift > 0 the normalized map is cyclically shifted by (shift, shift),
// attended with the region mask and shifted back. norm1_out, when given,
// receives LN(z) (before any shift).
Tensor swin_block(const Tensor& z, const BlockParams& params, const BlockOptions& options,
                  Tensor* norm1_out = nullptr);

// W-MSA block followed by an SW-MSA block shifted by floor(M/2).
Tensor swin_block_pair(const Tensor& z, const BlockParams& first, const BlockParams& second,
                       std::size_t window, Activation activation = Activation::gelu,
                       double eps = 1e-5);

// z[B, h, w, C] -> [B, h/2, w/2, 2C]. Each 2x2 group is concatenated in the
// order (0,0), (0,1), (1,0), (1,1) and projected by weight[4C, 2C].
Tensor patch_merge(const Tensor& z, const Tensor& weight);

// Pre-sigmoid class scores [B, num_classes] from backbone features
// [B, hf, wf, Cf]: LayerNorm, spatial mean, then the configured head family.
Tensor head_logits(const Tensor& features, const ParamSet& params, const ModelConfig& config);
Tensor head_forward(const Tensor& features, const ParamSet& params, const ModelConfig& config);

// Mean binary cross-entropy with p clamped to [1e-12, 1 - 1e-12].
Tensor bce_loss(const Tensor& probs, const Tensor& labels);

struct ForwardTrace {
  Tensor last_block_norm1;  // LN(z) of the final block, [B, hf, wf, Cf]
  std::vector<Shape> stage_outputs;
};

class SwinModel {
 public:
  SwinModel(ModelConfig config, std::uint64_t seed);
  SwinModel(ModelConfig config, ParamSet params);

  const ModelConfig& config() const { return config_; }
  const ParamSet& params() const { return params_; }
  ParamSet& params() { return params_; }

  Tensor backbone_forward(const Tensor& images, ForwardTrace* trace = nullptr) const;
  Tensor logits(const Tensor& images, ForwardTrace* trace = nullptr) const;
  Tensor forward(const Tensor& images) const;

  // Path prefix of the parameters belonging to class k's head.
  static std::string head_prefix(std::size_t cls);

 private:
  ModelConfig config_;
  ParamSet params_;
};

// Parameter shapes for a configuration, keyed by path.
ParamSet make_parameters(const ModelConfig& config);
void initialize_parameters(ParamSet& params, const ModelConfig& config, std::uint64_t seed);

}  // namespace swinchex
