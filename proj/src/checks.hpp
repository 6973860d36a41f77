#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "config.hpp"
#include "model.hpp"
#include "tensor.hpp"

namespace swinchex {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

using CheckReporter = std::function<void(const CheckResult&)>;

// Central-difference check of bce_loss(model(images), labels) on random
// images and labels, sampling coords_per_param coordinates of every parameter.
// The step is small so that a perturbation rarely straddles a ReLU kink in the
// heads; roundoff stays near 1e-9 relative at this step.
inline constexpr double kModelGradStep = 1e-7;
ParamGradCheck check_model_gradients(const ModelConfig& config, std::size_t batch,
                                     std::size_t coords_per_param, std::uint64_t seed,
                                     double step = kModelGradStep);

// Gradient checks of the individual ops; name -> max relative error.
std::vector<std::pair<std::string, double>> check_op_gradients(std::uint64_t seed);

// Runs the gradient checks and the numerical oracles. The split check runs
// only when the config points at data. Returns true when every check passes.
bool run_checks(const RunConfig& config, const CheckReporter& report = {});

}  // namespace swinchex
