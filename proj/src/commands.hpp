#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "complexity.hpp"
#include "config.hpp"
#include "data.hpp"
#include "gradcam.hpp"
#include "model.hpp"
#include "train.hpp"

namespace swinchex {

using LogFn = std::function<void(const std::string&)>;

// Records selected for training and validation: the labels CSV, restricted to
// data.train_list when set.
std::vector<PatientRecord> training_pool(const RunConfig& config);

// Patient split of the training pool, written to config.manifest_path().
SplitManifest cmd_split(const RunConfig& config, const LogFn& log = {});

struct TrainResult {
  double initial_loss = 0.0;  // mean training BCE before the first update
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 1-based
  std::string best_checkpoint;
};

// Loads the manifest (or creates it), trains config.train.epochs epochs and
// writes under output.dir:
//   checkpoints/epoch_NNNN.swcx + .cfg sidecar, metrics.csv, best.txt
TrainResult cmd_train(const RunConfig& config, const LogFn& log = {});

// Checkpoint path of the epoch recorded in <output.dir>/best.txt.
std::string best_checkpoint(const RunConfig& config);

// Config stored next to a checkpoint (<stem>.cfg), if present.
std::string sidecar_path(const std::string& checkpoint);
SwinModel load_model(const std::string& checkpoint, const RunConfig& fallback);

// Evaluates each checkpoint on split "train", "val" or "test" and writes one
// report column per checkpoint to out_csv. Returns the CSV text.
std::string cmd_eval(const RunConfig& config, const std::vector<std::string>& checkpoints,
                     const std::string& split, const std::string& out_csv,
                     const LogFn& log = {});

Heatmap cmd_gradcam(const RunConfig& config, const std::string& checkpoint,
                    const std::string& image_path, const std::optional<std::string>& class_name,
                    const std::string& out_png, const LogFn& log = {});

// h,w,C,M,omega_msa,omega_wmsa,measured_global,measured_windowed. Every
// combination of sizes x channels x windows with M dividing the size is
// emitted; measured columns are "NA" when measure is false.
std::string complexity_csv(const std::vector<std::size_t>& sizes,
                           const std::vector<std::size_t>& channels,
                           const std::vector<std::size_t>& windows, bool measure);

}  // namespace swinchex
