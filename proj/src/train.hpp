#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "data.hpp"
#include "model.hpp"

namespace swinchex {

// Area under the ROC curve via mid-ranks: equals P(score_pos > score_neg) +
// 0.5 P(tie). Throws DataError unless both classes are present.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  // Applies one update from the gradients currently stored in params.
  virtual void step(ParamSet& params, double lr) = 0;
};

// Adam with decoupled weight decay. Decay applies to matrices only; norms and
// biases are not decayed.
class AdamW final : public Optimizer {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.01);
  void step(ParamSet& params, double lr) override;

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  std::uint64_t t_ = 0;
  std::unordered_map<std::string, std::vector<double>> m_, v_;
};

class Sgd final : public Optimizer {
 public:
  void step(ParamSet& params, double lr) override;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_mean_auc = 0.0;
  std::array<std::optional<double>, kNumClasses> val_auc{};
};

struct TrainState {
  TrainState(SwinModel model, std::unique_ptr<Optimizer> optimizer, std::uint64_t seed);

  std::size_t epoch = 0;  // completed epochs
  SwinModel model;
  std::unique_ptr<Optimizer> optimizer;
  std::uint64_t seed;
  std::vector<EpochRecord> history;
};

// One pass over batches: forward, BCE, backward, optimizer step. Returns the
// mean batch loss and increments state.epoch. Throws NumericError if a loss is
// not finite.
double train_epoch(TrainState& state, const std::vector<Batch>& batches, double lr);

// Mean BCE of the model over batches, without updating anything.
double mean_loss(const SwinModel& model, const std::vector<Batch>& batches);

struct EvalReport {
  std::array<std::optional<double>, kNumClasses> per_class_auc{};  // nullopt: undefined
  double mean_auc = 0.0;  // over defined classes
  std::string split;
  std::size_t epoch = 0;
  std::vector<std::string> warnings;
};

// Per-class AUROC from raw score and label columns ([N, 14] row-major).
EvalReport evaluate_scores(std::span<const double> scores, std::span<const double> labels,
                           const std::string& split = "val", std::size_t epoch = 0);
EvalReport evaluate(const SwinModel& model, const std::vector<Batch>& batches,
                    const std::string& split = "val", std::size_t epoch = 0);

// Index of the epoch with the highest validation mean AUC; earliest wins ties.
std::size_t select_best_epoch(std::span<const double> val_mean_auc);
std::size_t select_best_epoch(const std::vector<EpochRecord>& history);

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochRecord& record);

// Table-1 shaped report: one row per class plus "Mean", one column per model.
struct ReportColumn {
  std::string name;
  EvalReport report;
};
std::string report_csv(const std::vector<ReportColumn>& columns);

}  // namespace swinchex
