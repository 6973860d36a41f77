#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "errors.hpp"
#include "rng.hpp"
#include "windowing.hpp"

namespace swinchex {

namespace {

constexpr double kProbClamp = 1e-12;

std::size_t head_layer_count(HeadVariant variant) {
  switch (variant) {
    case HeadVariant::headless: return 0;
    case HeadVariant::mlp1: return 1;
    case HeadVariant::mlp2: return 2;
    case HeadVariant::mlp3: return 3;
  }
  return 0;
}

std::string stage_prefix(std::size_t stage) { return "stages." + std::to_string(stage) + "."; }

std::string block_prefix(std::size_t stage, std::size_t block) {
  return stage_prefix(stage) + "blocks." + std::to_string(block) + ".";
}

}  // namespace

std::string to_string(HeadVariant variant) {
  switch (variant) {
    case HeadVariant::headless: return "headless";
    case HeadVariant::mlp1: return "mlp1";
    case HeadVariant::mlp2: return "mlp2";
    case HeadVariant::mlp3: return "mlp3";
  }
  return "?";
}

HeadVariant parse_head_variant(const std::string& name) {
  if (name == "headless") return HeadVariant::headless;
  if (name == "mlp1") return HeadVariant::mlp1;
  if (name == "mlp2") return HeadVariant::mlp2;
  if (name == "mlp3") return HeadVariant::mlp3;
  throw ConfigError("unknown head variant '" + name + "' (expected headless|mlp1|mlp2|mlp3)");
}

std::string head_variant_label(HeadVariant variant) {
  switch (variant) {
    case HeadVariant::headless: return "headless";
    case HeadVariant::mlp1: return "1-layer head";
    case HeadVariant::mlp2: return "2-layer head";
    case HeadVariant::mlp3: return "3-layer head";
  }
  return "?";
}

std::vector<std::size_t> default_head_widths(HeadVariant variant) {
  switch (variant) {
    case HeadVariant::headless: return {};
    case HeadVariant::mlp1: return {48};
    case HeadVariant::mlp2: return {384, 48};
    case HeadVariant::mlp3: return {384, 48, 48};
  }
  return {};
}

std::string to_string(Activation kind) { return kind == Activation::gelu ? "gelu" : "relu"; }

Activation parse_activation(const std::string& name) {
  if (name == "gelu") return Activation::gelu;
  if (name == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + name + "' (expected gelu|relu)");
}

// ---------------------------------------------------------------------------
// ModelConfig

ModelConfig ModelConfig::swin_large() {
  ModelConfig c;
  c.image_size = 224;
  c.patch_size = 4;
  c.embed_dim = 192;
  c.depths = {2, 2, 18, 2};
  c.num_heads = {6, 12, 24, 48};
  c.window = 7;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (patch_size == 0 || image_size == 0 || embed_dim == 0 || window == 0 || in_channels == 0) {
    fail("image_size, patch_size, embed_dim, window and in_channels must be positive");
  }
  if (image_size % patch_size != 0) {
    fail("image_size " + std::to_string(image_size) + " is not divisible by patch_size " +
         std::to_string(patch_size));
  }
  if (depths.empty()) fail("depths must list at least one stage");
  if (depths.size() != num_heads.size()) fail("depths and num_heads must have the same length");
  if (num_classes == 0) fail("num_classes must be positive");
  if (!(mlp_ratio > 0.0)) fail("mlp_ratio must be positive");
  if (!(layer_norm_eps > 0.0)) fail("layer_norm_eps must be positive");
  std::size_t res = image_size / patch_size;
  for (std::size_t s = 0; s < depths.size(); ++s) {
    if (s > 0) {
      if (res % 2 != 0) {
        fail("stage " + std::to_string(s - 1) + " resolution " + std::to_string(res) +
             " cannot be merged (odd)");
      }
      res /= 2;
    }
    if (depths[s] == 0 || depths[s] % 2 != 0) {
      fail("stage " + std::to_string(s) + " depth must be a positive even number");
    }
    const std::size_t c = stage_channels(s);
    if (num_heads[s] == 0 || c % num_heads[s] != 0) {
      fail("stage " + std::to_string(s) + " channels " + std::to_string(c) +
           " not divisible by " + std::to_string(num_heads[s]) + " heads");
    }
    const std::size_t m = std::min(window, res);
    if (res % m != 0) {
      fail("stage " + std::to_string(s) + " resolution " + std::to_string(res) +
           " is not divisible by window " + std::to_string(window));
    }
  }
  const auto widths = resolved_head_widths();
  if (widths.size() != head_layer_count(head_variant)) {
    fail("head_widths must list " + std::to_string(head_layer_count(head_variant)) +
         " layer widths for head variant " + to_string(head_variant));
  }
  for (std::size_t w : widths) {
    if (w == 0) fail("head widths must be positive");
  }
}

std::size_t ModelConfig::stage_resolution(std::size_t stage) const {
  return (image_size / patch_size) >> stage;
}

std::size_t ModelConfig::stage_channels(std::size_t stage) const { return embed_dim << stage; }

std::size_t ModelConfig::stage_window(std::size_t stage) const {
  return std::min(window, stage_resolution(stage));
}

std::size_t ModelConfig::block_shift(std::size_t stage, std::size_t block) const {
  if (block % 2 == 0 || stage_resolution(stage) <= window) return 0;
  return window / 2;
}

std::size_t ModelConfig::mlp_hidden(std::size_t channels) const {
  return std::max<std::size_t>(1, static_cast<std::size_t>(
                                      std::llround(static_cast<double>(channels) * mlp_ratio)));
}

std::vector<std::size_t> ModelConfig::resolved_head_widths() const {
  if (head_variant == HeadVariant::headless) return {};
  return head_widths.empty() ? default_head_widths(head_variant) : head_widths;
}

// ---------------------------------------------------------------------------
// Parameters

ParamSet make_parameters(const ModelConfig& config) {
  config.validate();
  ParamSet p;
  auto add = [&](const std::string& path, Shape shape) {
    p.add(path, Tensor::parameter(shape, std::vector<double>(shape_numel(shape), 0.0)));
  };
  const std::size_t c0 = config.embed_dim;
  const std::size_t patch_dim = config.patch_size * config.patch_size * config.in_channels;
  add("patch_embed.weight", {patch_dim, c0});
  add("patch_embed.bias", {c0});

  for (std::size_t s = 0; s < config.num_stages(); ++s) {
    const std::size_t c = config.stage_channels(s);
    const std::size_t hidden = config.mlp_hidden(c);
    for (std::size_t b = 0; b < config.depths[s]; ++b) {
      const std::string pre = block_prefix(s, b);
      add(pre + "norm1.gamma", {c});
      add(pre + "norm1.beta", {c});
      for (const char* w : {"wq", "wk", "wv", "wo"}) add(pre + "attn." + w, {c, c});
      if (config.qkv_bias) {
        for (const char* b2 : {"bq", "bk", "bv", "bo"}) add(pre + "attn." + b2, {c});
      }
      add(pre + "norm2.gamma", {c});
      add(pre + "norm2.beta", {c});
      add(pre + "mlp.fc1.weight", {c, hidden});
      add(pre + "mlp.fc1.bias", {hidden});
      add(pre + "mlp.fc2.weight", {hidden, c});
      add(pre + "mlp.fc2.bias", {c});
    }
    if (s + 1 < config.num_stages()) add(stage_prefix(s) + "merge.weight", {4 * c, 2 * c});
  }

  const std::size_t cf = config.final_channels();
  add("norm.gamma", {cf});
  add("norm.beta", {cf});
  if (config.head_variant == HeadVariant::headless) {
    add("head.weight", {cf, config.num_classes});
    add("head.bias", {config.num_classes});
  } else {
    const auto widths = config.resolved_head_widths();
    for (std::size_t k = 0; k < config.num_classes; ++k) {
      std::size_t in = cf;
      for (std::size_t l = 0; l <= widths.size(); ++l) {
        const std::size_t out = l < widths.size() ? widths[l] : 1;
        const std::string pre = SwinModel::head_prefix(k) + "layers." + std::to_string(l) + ".";
        add(pre + "weight", {in, out});
        add(pre + "bias", {out});
        in = out;
      }
    }
  }
  return p;
}

void initialize_parameters(ParamSet& params, const ModelConfig& config, std::uint64_t seed) {
  SplitMix64 rng(seed);
  for (auto& [path, t] : params) {
    auto values = t.mutable_data();
    if (t.rank() == 2) {
      for (double& v : values) v = rng.truncated_normal(config.init_std);
    } else if (path.ends_with("gamma")) {
      std::fill(values.begin(), values.end(), 1.0);
    } else {
      std::fill(values.begin(), values.end(), 0.0);
    }
  }
}

BlockParams block_params(const ParamSet& params, const std::string& prefix,
                         std::size_t num_heads) {
  BlockParams b;
  b.norm1_gamma = params.at(prefix + "norm1.gamma");
  b.norm1_beta = params.at(prefix + "norm1.beta");
  b.attn.wq = params.at(prefix + "attn.wq");
  b.attn.wk = params.at(prefix + "attn.wk");
  b.attn.wv = params.at(prefix + "attn.wv");
  b.attn.wo = params.at(prefix + "attn.wo");
  if (params.contains(prefix + "attn.bq")) {
    b.attn.bq = params.at(prefix + "attn.bq");
    b.attn.bk = params.at(prefix + "attn.bk");
    b.attn.bv = params.at(prefix + "attn.bv");
    b.attn.bo = params.at(prefix + "attn.bo");
  }
  b.attn.num_heads = num_heads;
  b.norm2_gamma = params.at(prefix + "norm2.gamma");
  b.norm2_beta = params.at(prefix + "norm2.beta");
  b.fc1_weight = params.at(prefix + "mlp.fc1.weight");
  b.fc1_bias = params.at(prefix + "mlp.fc1.bias");
  b.fc2_weight = params.at(prefix + "mlp.fc2.weight");
  b.fc2_bias = params.at(prefix + "mlp.fc2.bias");
  return b;
}

// ---------------------------------------------------------------------------
// Layers

Tensor patch_embed(const Tensor& images, const Tensor& weight, const Tensor& bias,
                   std::size_t patch) {
  const bool batched = images.rank() == 4;
  if (!batched && images.rank() != 3) {
    throw ShapeError("patch_embed: expected [B,H,W,C] or [H,W,C], got " +
                     shape_str(images.shape()));
  }
  const std::size_t b = batched ? images.dim(0) : 1;
  const std::size_t h = images.dim(-3);
  const std::size_t w = images.dim(-2);
  const std::size_t c = images.dim(-1);
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw ShapeError("patch_embed: image " + shape_str(images.shape()) +
                     " is not divisible into " + std::to_string(patch) + "x" +
                     std::to_string(patch) + " patches");
  }
  const std::size_t gh = h / patch;
  const std::size_t gw = w / patch;
  auto index = std::make_shared<std::vector<std::size_t>>();
  index->reserve(images.numel());
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t py = 0; py < gh; ++py)
      for (std::size_t px = 0; px < gw; ++px)
        for (std::size_t dy = 0; dy < patch; ++dy)
          for (std::size_t dx = 0; dx < patch; ++dx)
            for (std::size_t k = 0; k < c; ++k)
              index->push_back(((n * h + py * patch + dy) * w + px * patch + dx) * c + k);
  const std::size_t patch_dim = patch * patch * c;
  Tensor patches = gather(images, Shape{b, gh, gw, patch_dim}, std::move(index));
  Tensor tokens = linear(patches, weight, &bias);
  return batched ? tokens : reshape(tokens, Shape{gh, gw, weight.dim(1)});
}

Tensor swin_block(const Tensor& z, const BlockParams& p, const BlockOptions& options,
                  Tensor* norm1_out) {
  if (z.rank() != 4) throw ShapeError("swin_block: expected [B,h,w,C], got " + shape_str(z.shape()));
  const std::size_t b = z.dim(0);
  const std::size_t h = z.dim(1);
  const std::size_t w = z.dim(2);
  const std::size_t m = options.window;
  const WindowGrid grid{h, w, m, options.shift};
  grid.validate();

  Tensor x = layer_norm(z, p.norm1_gamma, p.norm1_beta, options.eps);
  if (norm1_out) *norm1_out = x;
  const auto s = static_cast<std::ptrdiff_t>(options.shift);
  if (s > 0) x = cyclic_shift(x, s, s);
  Tensor windows = window_partition(x, m);
  Tensor mask;
  if (s > 0) mask = build_shift_mask(grid);
  Tensor attended = window_mha(windows, p.attn, s > 0 ? &mask : nullptr);
  x = window_reverse(attended, m, b, h, w);
  if (s > 0) x = cyclic_shift(x, -s, -s);
  Tensor mid = add(z, x);

  Tensor y = layer_norm(mid, p.norm2_gamma, p.norm2_beta, options.eps);
  y = activate(linear(y, p.fc1_weight, &p.fc1_bias), options.activation);
  y = linear(y, p.fc2_weight, &p.fc2_bias);
  return add(mid, y);
}

Tensor swin_block_pair(const Tensor& z, const BlockParams& first, const BlockParams& second,
                       std::size_t window, Activation activation, double eps) {
  Tensor out = swin_block(z, first, {window, 0, activation, eps});
  return swin_block(out, second, {window, window / 2, activation, eps});
}

Tensor patch_merge(const Tensor& z, const Tensor& weight) {
  if (z.rank() != 4) throw ShapeError("patch_merge: expected [B,h,w,C], got " + shape_str(z.shape()));
  const std::size_t b = z.dim(0);
  const std::size_t h = z.dim(1);
  const std::size_t w = z.dim(2);
  const std::size_t c = z.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("patch_merge: resolution " + std::to_string(h) + "x" + std::to_string(w) +
                     " is odd");
  }
  auto index = std::make_shared<std::vector<std::size_t>>();
  index->reserve(z.numel());
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t i = 0; i < h / 2; ++i)
      for (std::size_t j = 0; j < w / 2; ++j)
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx)
            for (std::size_t k = 0; k < c; ++k)
              index->push_back(((n * h + 2 * i + dy) * w + 2 * j + dx) * c + k);
  Tensor grouped = gather(z, Shape{b, h / 2, w / 2, 4 * c}, std::move(index));
  return linear(grouped, weight);
}

Tensor head_logits(const Tensor& features, const ParamSet& params, const ModelConfig& config) {
  if (features.rank() != 4 || features.dim(1) != features.dim(2)) {
    throw ShapeError("head: expected square [B,hf,wf,Cf] features, got " +
                     shape_str(features.shape()));
  }
  const std::size_t b = features.dim(0);
  const std::size_t cf = features.dim(3);
  Tensor x = layer_norm(features, params.at("norm.gamma"), params.at("norm.beta"),
                        config.layer_norm_eps);
  Tensor pooled = reshape(avg_pool2d(x, features.dim(1)), Shape{b, cf});

  if (config.head_variant == HeadVariant::headless) {
    if (!params.contains("head.weight")) throw ShapeError("head: parameters are not headless");
    return linear(pooled, params.at("head.weight"), &params.at("head.bias"));
  }
  const std::size_t layers = config.resolved_head_widths().size() + 1;
  std::vector<Tensor> per_class;
  per_class.reserve(config.num_classes);
  for (std::size_t k = 0; k < config.num_classes; ++k) {
    Tensor h = pooled;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::string pre = SwinModel::head_prefix(k) + "layers." + std::to_string(l) + ".";
      if (!params.contains(pre + "weight")) {
        throw ShapeError("head: missing parameters for " + pre + " (variant mismatch?)");
      }
      h = linear(h, params.at(pre + "weight"), &params.at(pre + "bias"));
      if (l + 1 < layers) h = activate(h, config.head_activation);
    }
    per_class.push_back(h);
  }
  return concat(per_class, -1);
}

Tensor head_forward(const Tensor& features, const ParamSet& params, const ModelConfig& config) {
  return sigmoid(head_logits(features, params, config));
}

Tensor bce_loss(const Tensor& probs, const Tensor& labels) {
  if (probs.shape() != labels.shape()) {
    throw ShapeError("bce_loss: probs " + shape_str(probs.shape()) + " vs labels " +
                     shape_str(labels.shape()));
  }
  auto p = probs.data();
  auto y = labels.data();
  const double inv_n = 1.0 / static_cast<double>(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(p[i], kProbClamp, 1.0 - kProbClamp);
    total -= y[i] * std::log(pc) + (1.0 - y[i]) * std::log(1.0 - pc);
  }
  std::vector<double> targets(y.begin(), y.end());
  return make_result(Shape{}, {total * inv_n}, {probs},
                     [targets = std::move(targets), inv_n](Tensor::Node& self) {
                       Tensor::Node* in = self.inputs[0].get();
                       if (!in->requires_grad) return;
                       auto& g = in->ensure_grad();
                       const double up = self.grad[0] * inv_n;
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         const double pv = in->data[i];
                         if (pv <= kProbClamp || pv >= 1.0 - kProbClamp) continue;
                         const double yv = targets[i];
                         g[i] += up * (-yv / pv + (1.0 - yv) / (1.0 - pv));
                       }
                     });
}

// ---------------------------------------------------------------------------
// SwinModel

SwinModel::SwinModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), params_(make_parameters(config_)) {
  initialize_parameters(params_, config_, seed);
}

SwinModel::SwinModel(ModelConfig config, ParamSet params) : config_(std::move(config)) {
  params_ = make_parameters(config_);
  params_.assign_values(params);
}

std::string SwinModel::head_prefix(std::size_t cls) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "heads.%02zu.", cls);
  return buf;
}

Tensor SwinModel::backbone_forward(const Tensor& images, ForwardTrace* trace) const {
  const bool batched = images.rank() == 4;
  Tensor x = batched ? images : reshape(images, [&] {
    Shape s{1};
    s.insert(s.end(), images.shape().begin(), images.shape().end());
    return s;
  }());
  if (x.rank() != 4 || x.dim(1) != config_.image_size || x.dim(2) != config_.image_size ||
      x.dim(3) != config_.in_channels) {
    throw ShapeError("model expects [B," + std::to_string(config_.image_size) + "," +
                     std::to_string(config_.image_size) + "," +
                     std::to_string(config_.in_channels) + "] images, got " +
                     shape_str(images.shape()));
  }
  Tensor z = patch_embed(x, params_.at("patch_embed.weight"), params_.at("patch_embed.bias"),
                         config_.patch_size);
  for (std::size_t s = 0; s < config_.num_stages(); ++s) {
    for (std::size_t b = 0; b < config_.depths[s]; ++b) {
      const BlockParams bp = block_params(params_, block_prefix(s, b), config_.num_heads[s]);
      const BlockOptions opts{config_.stage_window(s), config_.block_shift(s, b),
                              config_.block_activation, config_.layer_norm_eps};
      const bool last = s + 1 == config_.num_stages() && b + 1 == config_.depths[s];
      z = swin_block(z, bp, opts, last && trace ? &trace->last_block_norm1 : nullptr);
    }
    if (trace) trace->stage_outputs.push_back(z.shape());
    if (s + 1 < config_.num_stages()) z = patch_merge(z, params_.at(stage_prefix(s) + "merge.weight"));
  }
  return z;
}

Tensor SwinModel::logits(const Tensor& images, ForwardTrace* trace) const {
  return head_logits(backbone_forward(images, trace), params_, config_);
}

Tensor SwinModel::forward(const Tensor& images) const { return sigmoid(logits(images)); }

}  // namespace swinchex
