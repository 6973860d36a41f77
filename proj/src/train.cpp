#include "train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "errors.hpp"
#include "ops.hpp"

namespace swinchex {

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string format_auc(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

}  // namespace

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auroc: scores/labels length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        positive_rank_sum += mid_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw DataError("AUROC undefined: need both positive and negative samples");
  }
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

// ---------------------------------------------------------------------------
// Optimizers

AdamW::AdamW(double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

void AdamW::step(ParamSet& params, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [path, t] : params) {
    auto g = t.grad();
    auto w = t.mutable_data();
    auto& m = m_[path];
    auto& v = v_[path];
    if (m.size() != w.size()) {
      m.assign(w.size(), 0.0);
      v.assign(w.size(), 0.0);
    }
    const double decay = t.rank() >= 2 ? weight_decay_ : 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + decay * w[i]);
    }
  }
}

void Sgd::step(ParamSet& params, double lr) {
  for (auto& [_, t] : params) {
    auto g = t.grad();
    auto w = t.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
  }
}

// ---------------------------------------------------------------------------
// Training

TrainState::TrainState(SwinModel m, std::unique_ptr<Optimizer> opt, std::uint64_t s)
    : model(std::move(m)), optimizer(std::move(opt)), seed(s) {}

double train_epoch(TrainState& state, const std::vector<Batch>& batches, double lr) {
  if (batches.empty()) throw DataError("train_epoch: no batches");
  double total = 0.0;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const Batch& b = batches[i];
    state.model.params().zero_grad();
    Tensor loss = bce_loss(state.model.forward(b.images), b.labels);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      throw NumericError("non-finite loss " + format_double(value) + " at epoch " +
                         std::to_string(state.epoch + 1) + ", batch " + std::to_string(i));
    }
    loss.backward();
    state.optimizer->step(state.model.params(), lr);
    total += value;
  }
  ++state.epoch;
  return total / static_cast<double>(batches.size());
}

double mean_loss(const SwinModel& model, const std::vector<Batch>& batches) {
  if (batches.empty()) throw DataError("mean_loss: no batches");
  NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& b : batches) total += bce_loss(model.forward(b.images), b.labels).item();
  return total / static_cast<double>(batches.size());
}

EvalReport evaluate_scores(std::span<const double> scores, std::span<const double> labels,
                           const std::string& split, std::size_t epoch) {
  if (scores.size() != labels.size() || scores.size() % kNumClasses != 0) {
    throw ShapeError("evaluate: scores and labels must both be [N, 14]");
  }
  const std::size_t n = scores.size() / kNumClasses;
  EvalReport report;
  report.split = split;
  report.epoch = epoch;
  double total = 0.0;
  std::size_t defined = 0;
  std::vector<double> column(n);
  std::vector<std::uint8_t> truth(n);
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    std::size_t positives = 0;
    for (std::size_t i = 0; i < n; ++i) {
      column[i] = scores[i * kNumClasses + k];
      truth[i] = labels[i * kNumClasses + k] > 0.5 ? 1 : 0;
      positives += truth[i];
    }
    if (positives == 0 || positives == n) {
      report.warnings.push_back(class_names()[k] + ": AUROC undefined on split '" + split +
                                "' (single class), excluded from the mean");
      continue;
    }
    const double auc = auroc(column, truth);
    report.per_class_auc[k] = auc;
    total += auc;
    ++defined;
  }
  report.mean_auc = defined ? total / static_cast<double>(defined) : 0.0;
  if (!defined) report.warnings.push_back("no class has a defined AUROC on split '" + split + "'");
  return report;
}

EvalReport evaluate(const SwinModel& model, const std::vector<Batch>& batches,
                    const std::string& split, std::size_t epoch) {
  NoGradGuard no_grad;
  std::vector<double> scores;
  std::vector<double> labels;
  for (const auto& b : batches) {
    Tensor probs = model.forward(b.images);
    scores.insert(scores.end(), probs.data().begin(), probs.data().end());
    labels.insert(labels.end(), b.labels.data().begin(), b.labels.data().end());
  }
  return evaluate_scores(scores, labels, split, epoch);
}

std::size_t select_best_epoch(std::span<const double> val_mean_auc) {
  if (val_mean_auc.empty()) throw DataError("select_best_epoch: empty history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < val_mean_auc.size(); ++i) {
    if (val_mean_auc[i] > val_mean_auc[best]) best = i;
  }
  return best;
}

std::size_t select_best_epoch(const std::vector<EpochRecord>& history) {
  std::vector<double> aucs;
  aucs.reserve(history.size());
  for (const auto& r : history) aucs.push_back(r.val_mean_auc);
  return select_best_epoch(aucs);
}

std::string metrics_csv_header() {
  std::string h = "epoch,train_loss,val_mean_auc";
  for (const auto& name : class_names()) h += "," + name;
  return h;
}

std::string metrics_csv_row(const EpochRecord& r) {
  std::string row = std::to_string(r.epoch) + "," + format_double(r.train_loss) + "," +
                    format_double(r.val_mean_auc);
  for (const auto& auc : r.val_auc) row += "," + format_auc(auc);
  return row;
}

std::string report_csv(const std::vector<ReportColumn>& columns) {
  std::ostringstream out;
  out << "pathology";
  for (const auto& c : columns) out << ',' << c.name;
  out << '\n';
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    out << class_names()[k];
    for (const auto& c : columns) out << ',' << format_auc(c.report.per_class_auc[k]);
    out << '\n';
  }
  out << "Mean";
  for (const auto& c : columns) out << ',' << format_double(c.report.mean_auc);
  out << '\n';
  return out.str();
}

}  // namespace swinchex
