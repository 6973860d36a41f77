#include "checks.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "attention.hpp"
#include "complexity.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "ops.hpp"
#include "rng.hpp"
#include "train.hpp"
#include "windowing.hpp"

namespace swinchex {

namespace {

constexpr double kOpGradTolerance = 1e-5;
constexpr double kModelGradTolerance = 1e-4;
constexpr double kOracleTolerance = 1e-10;
constexpr double kRowSumTolerance = 1e-12;
constexpr double kAurocTolerance = 1e-9;

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 3);
  return std::string(buf, end);
}

Tensor random_tensor(const Shape& shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(shape, std::move(v));
}

// Checks d/dx sum(op(x) * w) for a fixed random w.
double op_check(const std::function<Tensor(const Tensor&)>& op, const Tensor& x, SplitMix64& rng) {
  Tensor w;
  {
    NoGradGuard no_grad;
    w = random_tensor(op(x).shape(), rng);
  }
  return grad_check([&](const Tensor& t) { return sum(mul(op(t), w)); }, x);
}

MhaParams random_mha(std::size_t channels, std::size_t heads, SplitMix64& rng, bool bias) {
  MhaParams p;
  const double s = 1.0 / std::sqrt(static_cast<double>(channels));
  p.wq = random_tensor({channels, channels}, rng, -s, s);
  p.wk = random_tensor({channels, channels}, rng, -s, s);
  p.wv = random_tensor({channels, channels}, rng, -s, s);
  p.wo = random_tensor({channels, channels}, rng, -s, s);
  if (bias) {
    p.bq = random_tensor({channels}, rng);
    p.bk = random_tensor({channels}, rng);
    p.bv = random_tensor({channels}, rng);
    p.bo = random_tensor({channels}, rng);
  }
  p.num_heads = heads;
  return p;
}

// Shifted-window attention through the library path: shift, partition, masked
// MHA, reverse, unshift.
Tensor shifted_window_attention(const Tensor& x, const MhaParams& p, std::size_t window,
                                std::size_t shift) {
  const std::size_t h = x.dim(0), w = x.dim(1);
  const auto s = static_cast<std::ptrdiff_t>(shift);
  const Tensor mask = build_shift_mask({h, w, window, shift});
  Tensor wins = window_partition(cyclic_shift(x, s, s), window);
  Tensor out = window_reverse(window_mha(wins, p, &mask), window, h, w);
  return cyclic_shift(out, -s, -s);
}

// Direct evaluation: token (i, j) attends to every token that lands in the same
// shifted window and was not wrapped around differently by the shift.
std::vector<double> brute_force_shifted_attention(const Tensor& x, const MhaParams& p,
                                                  std::size_t window, std::size_t shift) {
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const std::size_t heads = p.num_heads, d = c / heads;
  const auto xs = x.data();
  auto project = [&](const Tensor& weight, std::size_t token) {
    std::vector<double> out(c, 0.0);
    const auto W = weight.data();
    for (std::size_t a = 0; a < c; ++a)
      for (std::size_t b = 0; b < c; ++b) out[b] += xs[token * c + a] * W[a * c + b];
    return out;
  };
  struct Key {
    std::size_t wy, wx;
    bool ry, rx;
    bool operator==(const Key&) const = default;
  };
  auto key_of = [&](std::size_t i, std::size_t j) {
    const std::size_t si = (i + h - shift) % h, sj = (j + w - shift) % w;
    return Key{si / window, sj / window, si + shift >= h, sj + shift >= w};
  };
  std::vector<std::vector<double>> q(h * w), k(h * w), v(h * w);
  for (std::size_t t = 0; t < h * w; ++t) {
    q[t] = project(p.wq, t);
    k[t] = project(p.wk, t);
    v[t] = project(p.wv, t);
  }
  std::vector<double> result(h * w * c, 0.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t t = 0; t < h * w; ++t) {
    const Key kt = key_of(t / w, t % w);
    std::vector<std::size_t> peers;
    for (std::size_t u = 0; u < h * w; ++u)
      if (key_of(u / w, u % w) == kt) peers.push_back(u);
    std::vector<double> merged(c, 0.0);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      std::vector<double> logits;
      for (std::size_t u : peers) {
        double dot = 0.0;
        for (std::size_t e = 0; e < d; ++e) dot += q[t][hd * d + e] * k[u][hd * d + e];
        logits.push_back(dot * scale);
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (auto& l : logits) z += (l = std::exp(l - mx));
      for (std::size_t idx = 0; idx < peers.size(); ++idx)
        for (std::size_t e = 0; e < d; ++e)
          merged[hd * d + e] += logits[idx] / z * v[peers[idx]][hd * d + e];
    }
    const auto Wo = p.wo.data();
    for (std::size_t a = 0; a < c; ++a)
      for (std::size_t b = 0; b < c; ++b) result[t * c + b] += merged[a] * Wo[a * c + b];
  }
  return result;
}

double pairwise_auroc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

class Suite {
 public:
  explicit Suite(const CheckReporter& report) : report_(report) {}

  void record(std::string name, bool passed, std::string detail) {
    all_ &= passed;
    if (report_) report_({std::move(name), passed, std::move(detail)});
  }

  template <typename F>
  void run(const std::string& name, F&& body) {
    try {
      body();
    } catch (const std::exception& e) {
      record(name, false, std::string("exception: ") + e.what());
    }
  }

  bool all() const { return all_; }

 private:
  const CheckReporter& report_;
  bool all_ = true;
};

}  // namespace

std::vector<std::pair<std::string, double>> check_op_gradients(std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<std::pair<std::string, double>> out;
  auto add_check = [&](const std::string& name, const std::function<Tensor(const Tensor&)>& op,
                       const Tensor& x) { out.emplace_back(name, op_check(op, x, rng)); };

  const Tensor b34 = random_tensor({3, 4}, rng);
  add_check("matmul", [&](const Tensor& x) { return matmul(x, b34); }, random_tensor({2, 5, 3}, rng));
  const Tensor a25 = random_tensor({2, 5, 3}, rng);
  add_check("matmul_rhs", [&](const Tensor& x) { return matmul(a25, x); }, random_tensor({3, 4}, rng));
  add_check("add", [&](const Tensor& x) { return add(x, b34); }, random_tensor({3, 4}, rng));
  add_check("sub", [&](const Tensor& x) { return sub(b34, x); }, random_tensor({3, 4}, rng));
  add_check("mul", [&](const Tensor& x) { return mul(x, x); }, random_tensor({3, 4}, rng));
  const Tensor bias4 = random_tensor({4}, rng);
  add_check("add_bias", [&](const Tensor& x) { return add_bias(x, bias4); }, random_tensor({2, 3, 4}, rng));
  add_check("bias_grad", [&](const Tensor& bias) { return add_bias(b34, bias); }, random_tensor({4}, rng));
  add_check("linear", [&](const Tensor& x) { return linear(x, b34, &bias4); }, random_tensor({5, 3}, rng));
  add_check("softmax", [](const Tensor& x) { return softmax(x, -1); }, random_tensor({3, 5}, rng, -3, 3));
  add_check("softmax_axis0", [](const Tensor& x) { return softmax(x, 0); }, random_tensor({3, 5}, rng, -3, 3));
  const Tensor gamma = random_tensor({5}, rng, 0.5, 1.5), beta = random_tensor({5}, rng);
  add_check("layer_norm", [&](const Tensor& x) { return layer_norm(x, gamma, beta); },
            random_tensor({4, 5}, rng, -2, 2));
  const Tensor ln_x = random_tensor({4, 5}, rng, -2, 2);
  add_check("layer_norm_gamma", [&](const Tensor& g) { return layer_norm(ln_x, g, beta); }, gamma.detach());
  add_check("layer_norm_beta", [&](const Tensor& b) { return layer_norm(ln_x, gamma, b); }, beta.detach());
  add_check("gelu", [](const Tensor& x) { return gelu(x); }, random_tensor({4, 5}, rng, -3, 3));
  {
    std::vector<double> v(20);
    for (auto& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 2.0);  // away from the kink
    add_check("relu", [](const Tensor& x) { return relu(x); }, Tensor({4, 5}, v));
  }
  add_check("sigmoid", [](const Tensor& x) { return sigmoid(x); }, random_tensor({4, 5}, rng, -4, 4));
  add_check("reshape", [](const Tensor& x) { return reshape(x, {6, 2}); }, random_tensor({3, 4}, rng));
  add_check("permute", [](const Tensor& x) { return permute(x, {2, 0, 1}); }, random_tensor({2, 3, 4}, rng));
  add_check("concat", [&](const Tensor& x) { return concat({x, b34, x}, 1); }, random_tensor({3, 2}, rng));
  add_check("avg_pool2d", [](const Tensor& x) { return avg_pool2d(x, 2); }, random_tensor({2, 4, 4, 3}, rng));
  add_check("mean", [](const Tensor& x) { return mean(x); }, random_tensor({3, 4}, rng));
  add_check("window_partition", [](const Tensor& x) { return window_partition(x, 2); },
            random_tensor({4, 6, 3}, rng));
  add_check("cyclic_shift", [](const Tensor& x) { return cyclic_shift(x, 1, 2); },
            random_tensor({4, 4, 2}, rng));
  // Finite differences cannot resolve a perturbation next to -1e9, so the
  // additive path is checked with moderate mask values.
  const Tensor mask = random_tensor({2, 4, 4}, rng, -3, 3);
  add_check("add_mask", [&](const Tensor& x) { return add_mask(x, mask); }, random_tensor({4, 4, 4}, rng));
  {
    const Tensor k = random_tensor({4, 4, 3}, rng), v = random_tensor({4, 4, 3}, rng);
    const Tensor m = build_shift_mask({4, 4, 2, 1});
    add_check("attention_q", [&](const Tensor& q) { return scaled_attention(q, k, v, &m); },
              random_tensor({4, 4, 3}, rng));
    const Tensor q = random_tensor({4, 4, 3}, rng);
    add_check("attention_k", [&](const Tensor& kk) { return scaled_attention(q, kk, v, &m); },
              random_tensor({4, 4, 3}, rng));
    add_check("attention_v", [&](const Tensor& vv) { return scaled_attention(q, k, vv, &m); },
              random_tensor({4, 4, 3}, rng));
  }
  {
    const MhaParams p = random_mha(4, 2, rng, true);
    const Tensor m = build_shift_mask({4, 4, 2, 1});
    add_check("window_mha", [&](const Tensor& x) { return window_mha(x, p, &m); },
              random_tensor({4, 4, 4}, rng));
  }
  {
    const Tensor w = random_tensor({12, 5}, rng), b = random_tensor({5}, rng);
    add_check("patch_embed", [&](const Tensor& x) { return patch_embed(x, w, b, 2); },
              random_tensor({1, 4, 4, 3}, rng, 0, 1));
    const Tensor wm = random_tensor({12, 6}, rng);
    add_check("patch_merge", [&](const Tensor& x) { return patch_merge(x, wm); },
              random_tensor({1, 4, 4, 3}, rng));
  }
  {
    std::vector<double> labels(12);
    for (auto& y : labels) y = rng.uniform() < 0.5 ? 0.0 : 1.0;
    const Tensor y({3, 4}, labels);
    add_check("bce_loss", [&](const Tensor& p) { return bce_loss(p, y); }, random_tensor({3, 4}, rng, 0.1, 0.9));
  }
  return out;
}

ParamGradCheck check_model_gradients(const ModelConfig& config, std::size_t batch,
                                     std::size_t coords_per_param, std::uint64_t seed,
                                     double step) {
  SwinModel model(config, seed);
  SplitMix64 rng(seed ^ 0x5eedULL);
  const std::size_t s = config.image_size;
  const Tensor images = random_tensor({batch, s, s, config.in_channels}, rng, 0.0, 1.0);
  std::vector<double> y(batch * config.num_classes);
  for (auto& v : y) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
  const Tensor labels({batch, config.num_classes}, y);
  return grad_check_params([&] { return bce_loss(model.forward(images), labels); }, model.params(),
                           coords_per_param, seed + 1, {step, 1e-3});
}

bool run_checks(const RunConfig& config, const CheckReporter& report) {
  Suite suite(report);

  suite.run("op gradients", [&] {
    for (const auto& [name, err] : check_op_gradients(config.seed)) {
      suite.record("grad " + name, err < kOpGradTolerance, "max rel err " + fmt(err));
    }
  });

  suite.run("model gradients", [&] {
    const ModelConfig model = config.model.image_size <= 64 ? config.model : ModelConfig{};
    const ParamGradCheck r = check_model_gradients(model, 2, 3, config.seed);
    suite.record("grad model", r.max_error < kModelGradTolerance,
                 "max rel err " + fmt(r.max_error) + " over " + std::to_string(r.coordinates) +
                     " coords (worst " + r.worst_param + ")");
  });

  suite.run("window roundtrip", [&] {
    SplitMix64 rng(config.seed + 11);
    bool ok = true;
    for (int i = 0; i < 200 && ok; ++i) {
      const std::size_t m = 1 + rng.below(4);
      const std::size_t h = m * (1 + rng.below(4)), w = m * (1 + rng.below(4));
      const Tensor x = random_tensor({h, w, 1 + rng.below(3)}, rng);
      ok = window_reverse(window_partition(x, m), m, h, w).data().size() == x.numel() &&
           std::ranges::equal(window_reverse(window_partition(x, m), m, h, w).data(), x.data());
    }
    suite.record("window partition/reverse roundtrip", ok, "200 random shapes");
  });

  suite.run("shifted window oracle", [&] {
    SplitMix64 rng(config.seed + 12);
    double worst = 0.0;
    for (std::size_t m : {2, 4}) {
      for (std::size_t h = m; h <= 8; h += m) {
        for (std::size_t w = m; w <= 8; w += m) {
          const Tensor x = random_tensor({h, w, 4}, rng);
          const MhaParams p = random_mha(4, 2, rng, false);
          const Tensor out = shifted_window_attention(x, p, m, m / 2);
          const auto got = out.data();
          const auto want = brute_force_shifted_attention(x, p, m, m / 2);
          for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
        }
      }
    }
    suite.record("masked SW-MSA vs brute force", worst <= kOracleTolerance, "max abs diff " + fmt(worst));
  });

  suite.run("attention rows", [&] {
    SplitMix64 rng(config.seed + 13);
    const Tensor q = random_tensor({3, 6, 4}, rng, -3, 3), k = random_tensor({3, 6, 4}, rng, -3, 3);
    const Tensor v = random_tensor({3, 6, 4}, rng);
    Tensor weights;
    scaled_attention(q, k, v, nullptr, &weights);
    double worst = 0.0;
    const auto a = weights.data();
    for (std::size_t r = 0; r < a.size() / 6; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < 6; ++j) total += a[r * 6 + j];
      worst = std::max(worst, std::abs(total - 1.0));
    }
    suite.record("attention rows sum to 1", worst <= kRowSumTolerance, "max |sum-1| " + fmt(worst));
    const Tensor v1 = random_tensor({1, 4}, rng);
    const Tensor single = scaled_attention(random_tensor({1, 4}, rng), random_tensor({1, 4}, rng), v1);
    suite.record("single key returns V", std::ranges::equal(single.data(), v1.data()), "exact");
  });

  suite.run("complexity", [&] {
    const bool values = omega_msa({7, 7, 1, 0}) == 4998 && omega_wmsa({56, 56, 192, 7}) == 521428992ULL;
    suite.record("complexity formulas", values, "omega_msa(7,7,1), omega_wmsa(56,56,192,7)");
    bool match = true;
    for (std::uint64_t hw : {4, 8, 12})
      for (std::uint64_t c : {2, 4, 8}) {
        const ComplexityQuery q{hw, hw, c, 4};
        match &= measure_attention_macs(q, AttentionMode::global) == omega_msa(q);
        match &= measure_attention_macs(q, AttentionMode::windowed) == omega_wmsa(q);
      }
    suite.record("instrumented MACs equal formulas", match, "3x3 grid, M=4");
  });

  suite.run("auroc", [&] {
    SplitMix64 rng(config.seed + 14);
    double worst = 0.0;
    for (int t = 0; t < 500; ++t) {
      const std::size_t n = 2 + rng.below(40);
      std::vector<double> s(n);
      std::vector<std::uint8_t> y(n);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = static_cast<double>(rng.below(8));  // coarse values force ties
        y[i] = rng.below(2);
      }
      y[0] = 0;
      y[1] = 1;
      worst = std::max(worst, std::abs(auroc(s, y) - pairwise_auroc(s, y)));
    }
    suite.record("auroc vs pairwise oracle", worst <= kAurocTolerance, "max diff " + fmt(worst));
  });

  suite.run("model selection", [&] {
    const std::vector<double> a{0.70, 0.75, 0.73}, b{0.7, 0.8, 0.8};
    suite.record("select_best_epoch earliest tie",
                 select_best_epoch(a) == 1 && select_best_epoch(b) == 1, "argmax");
  });

  if (!config.labels_csv.empty()) {
    suite.run("split", [&] {
      validate_config(config, true);
      auto records = parse_label_csv(config.labels_csv);
      const SplitManifest m = patient_split(records, config.train_frac, config.split_seed);
      std::map<std::string, std::string> patient_of;
      for (const auto& r : records) patient_of[r.image_id] = r.patient_id;
      std::set<std::string> train_patients;
      for (const auto& id : m.train) train_patients.insert(patient_of.at(id));
      bool disjoint = true;
      for (const auto& id : m.val) disjoint &= !train_patients.count(patient_of.at(id));
      const bool deterministic = patient_split(records, config.train_frac, config.split_seed) == m;
      suite.record("patient split disjoint and deterministic", disjoint && deterministic,
                   std::to_string(m.train.size()) + " train / " + std::to_string(m.val.size()) + " val");
    });
  }
  return suite.all();
}

}  // namespace swinchex
