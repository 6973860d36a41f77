#include "commands.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "checkpoint.hpp"
#include "errors.hpp"

namespace swinchex {

namespace fs = std::filesystem;

namespace {

void emit(const LogFn& log, const std::string& message) {
  if (log) log(message);
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

std::map<std::string, std::string> read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

std::unique_ptr<Optimizer> make_optimizer(const RunConfig& config) {
  if (config.optimizer == "sgd") return std::make_unique<Sgd>();
  return std::make_unique<AdamW>(config.beta1, config.beta2, 1e-8, config.weight_decay);
}

EpochRecord make_record(std::size_t epoch, double loss, const EvalReport& report) {
  EpochRecord r;
  r.epoch = epoch;
  r.train_loss = loss;
  r.val_mean_auc = report.mean_auc;
  r.val_auc = report.per_class_auc;
  return r;
}

std::string checkpoint_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%04zu.swcx", epoch);
  return buf;
}

}  // namespace

std::vector<PatientRecord> training_pool(const RunConfig& config) {
  auto records = parse_label_csv(config.labels_csv);
  if (!config.train_list.empty()) records = select_records(records, read_image_list(config.train_list));
  return records;
}

SplitManifest cmd_split(const RunConfig& config, const LogFn& log) {
  validate_config(config, true);
  const auto records = training_pool(config);
  SplitManifest manifest = patient_split(records, config.train_frac, config.split_seed);
  const fs::path manifest_path(config.manifest_path());
  if (manifest_path.has_parent_path()) fs::create_directories(manifest_path.parent_path());
  save_manifest(config.manifest_path(), manifest);
  emit(log, "split: " + std::to_string(manifest.train.size()) + " train / " +
                std::to_string(manifest.val.size()) + " val images -> " + config.manifest_path());
  return manifest;
}

TrainResult cmd_train(const RunConfig& config, const LogFn& log) {
  if (config.epochs == 0) throw ConfigError("[train] epochs: nothing to train (epochs = 0)");
  validate_config(config, true);

  SplitManifest manifest;
  if (fs::exists(config.manifest_path())) {
    manifest = load_manifest(config.manifest_path());
    emit(log, "using manifest " + config.manifest_path());
  } else {
    manifest = cmd_split(config, log);
  }
  const auto pool = training_pool(config);
  const std::size_t size = config.model.image_size;
  ImageSet train_set(select_records(pool, manifest.train), config.image_dir, size);
  ImageSet val_set(select_records(pool, manifest.val), config.image_dir, size);
  if (train_set.size() == 0 || val_set.size() == 0) {
    throw DataError("train and val splits must both be non-empty");
  }

  TrainState state(SwinModel(config.model, config.seed), make_optimizer(config), config.seed);
  const auto val_batches = make_batches(val_set, config.batch_size, 0, false);

  const fs::path out_dir(config.output_dir);
  const fs::path ckpt_dir = out_dir / "checkpoints";
  fs::create_directories(ckpt_dir);

  TrainResult result;
  result.initial_loss = mean_loss(state.model, make_batches(train_set, config.batch_size, 0, false));
  const EvalReport initial = evaluate(state.model, val_batches, "val", 0);
  std::string metrics = metrics_csv_header() + "\n" +
                        metrics_csv_row(make_record(0, result.initial_loss, initial)) + "\n";
  emit(log, "epoch 0: train_loss " + format_double(result.initial_loss) + ", val_mean_auc " +
                format_double(initial.mean_auc));
  for (const auto& w : initial.warnings) emit(log, "warning: " + w);

  const std::string sidecar_text = serialize_config(config);
  for (std::size_t e = 1; e <= config.epochs; ++e) {
    const auto batches = make_batches(train_set, config.batch_size, config.seed + e, true);
    const double loss = train_epoch(state, batches, config.lr);
    const EvalReport report = evaluate(state.model, val_batches, "val", e);
    state.history.push_back(make_record(e, loss, report));

    const fs::path ckpt = ckpt_dir / checkpoint_name(e);
    save_checkpoint(ckpt.string(), state.model.params());
    write_text_file(sidecar_path(ckpt.string()), sidecar_text);
    metrics += metrics_csv_row(state.history.back()) + "\n";
    write_text_file(out_dir / "metrics.csv", metrics);
    emit(log, "epoch " + std::to_string(e) + ": train_loss " + format_double(loss) +
                  ", val_mean_auc " + format_double(report.mean_auc));
  }

  const std::size_t best = select_best_epoch(state.history);
  result.history = state.history;
  result.best_epoch = best + 1;
  result.best_checkpoint = (ckpt_dir / checkpoint_name(result.best_epoch)).string();
  write_text_file(out_dir / "best.txt",
                  "epoch=" + std::to_string(result.best_epoch) + "\ncheckpoint=checkpoints/" +
                      checkpoint_name(result.best_epoch) + "\nval_mean_auc=" +
                      format_double(state.history[best].val_mean_auc) + "\n");
  emit(log, "best epoch " + std::to_string(result.best_epoch) + " (val_mean_auc " +
                format_double(state.history[best].val_mean_auc) + ")");
  return result;
}

std::string best_checkpoint(const RunConfig& config) {
  const fs::path record = fs::path(config.output_dir) / "best.txt";
  if (!fs::exists(record)) {
    throw DataError("no checkpoint given and '" + record.string() + "' does not exist; run train first");
  }
  const auto kv = read_key_values(record.string());
  const auto it = kv.find("checkpoint");
  if (it == kv.end()) throw DataError("'" + record.string() + "' has no checkpoint entry");
  return (fs::path(config.output_dir) / it->second).string();
}

std::string sidecar_path(const std::string& checkpoint) {
  return fs::path(checkpoint).replace_extension(".cfg").string();
}

SwinModel load_model(const std::string& checkpoint, const RunConfig& fallback) {
  const std::string sidecar = sidecar_path(checkpoint);
  ModelConfig model_config = fs::exists(sidecar) ? load_config(sidecar).model : fallback.model;
  model_config.validate();
  return SwinModel(model_config, load_checkpoint(checkpoint));
}

std::string cmd_eval(const RunConfig& config, const std::vector<std::string>& checkpoints,
                     const std::string& split, const std::string& out_csv, const LogFn& log) {
  validate_config(config, true);
  std::vector<PatientRecord> records;
  if (split == "train" || split == "val") {
    if (!fs::exists(config.manifest_path())) {
      throw DataError("manifest '" + config.manifest_path() + "' does not exist; run split first");
    }
    const SplitManifest manifest = load_manifest(config.manifest_path());
    records = select_records(training_pool(config), split == "train" ? manifest.train : manifest.val);
  } else if (split == "test") {
    if (config.test_list.empty()) throw ConfigError("[data] test_list: not set (needed for split 'test')");
    records = select_records(parse_label_csv(config.labels_csv), read_image_list(config.test_list));
  } else {
    throw ConfigError("unknown split '" + split + "' (expected train, val or test)");
  }
  if (records.empty()) throw DataError("split '" + split + "' is empty");

  std::vector<std::string> paths = checkpoints;
  if (paths.empty()) paths.push_back(best_checkpoint(config));

  std::vector<SwinModel> models;
  std::map<std::string, std::size_t> label_count;
  for (const auto& p : paths) {
    models.push_back(load_model(p, config));
    ++label_count[head_variant_label(models.back().config().head_variant)];
  }

  std::map<std::size_t, ImageSet> sets;
  std::vector<ReportColumn> columns;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const std::size_t size = models[i].config().image_size;
    auto it = sets.find(size);
    if (it == sets.end()) it = sets.emplace(size, ImageSet(records, config.image_dir, size)).first;
    const auto batches = make_batches(it->second, config.batch_size, 0, false);
    EvalReport report = evaluate(models[i], batches, split, 0);
    for (const auto& w : report.warnings) emit(log, "warning: " + w);
    std::string name = head_variant_label(models[i].config().head_variant);
    if (label_count[name] > 1) name += " [" + fs::path(paths[i]).stem().string() + "]";
    emit(log, name + ": mean AUC " + format_double(report.mean_auc) + " on " + split);
    columns.push_back({name, std::move(report)});
  }
  const std::string csv = report_csv(columns);
  write_text_file(out_csv, csv);
  return csv;
}

Heatmap cmd_gradcam(const RunConfig& config, const std::string& checkpoint,
                    const std::string& image_path, const std::optional<std::string>& class_name,
                    const std::string& out_png, const LogFn& log) {
  validate_config(config, false);
  SwinModel model = load_model(checkpoint.empty() ? best_checkpoint(config) : checkpoint, config);
  std::optional<std::size_t> target;
  if (class_name) {
    target = class_index(*class_name);
    if (!target) throw ConfigError("unknown class name '" + *class_name + "'");
  }
  const Tensor image = load_image(image_path, model.config().image_size);
  Heatmap heatmap = grad_cam(model, image, target);
  if (fs::path(out_png).has_parent_path()) fs::create_directories(fs::path(out_png).parent_path());
  render_heatmap(heatmap.values, image, out_png);
  emit(log, "grad-cam for " + class_names()[heatmap.target_class] +
                (heatmap.dominant ? " (dominant logit)" : "") + " -> " + out_png);
  return heatmap;
}

std::string complexity_csv(const std::vector<std::size_t>& sizes,
                           const std::vector<std::size_t>& channels,
                           const std::vector<std::size_t>& windows, bool measure) {
  std::ostringstream out;
  out << "h,w,C,M,omega_msa,omega_wmsa,measured_global,measured_windowed\n";
  for (std::size_t h : sizes) {
    for (std::size_t c : channels) {
      for (std::size_t m : windows) {
        if (m == 0 || h % m != 0) continue;
        const ComplexityQuery q{h, h, c, m};
        out << h << ',' << h << ',' << c << ',' << m << ',' << omega_msa(q) << ','
            << omega_wmsa(q) << ',';
        if (measure) {
          out << measure_attention_macs(q, AttentionMode::global) << ','
              << measure_attention_macs(q, AttentionMode::windowed) << '\n';
        } else {
          out << "NA,NA\n";
        }
      }
    }
  }
  return out.str();
}

}  // namespace swinchex
