#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "model.hpp"

namespace swinchex {

// Everything a command needs. Text form is INI-like:
//
//   [section]
//   key = value     # comments start with '#' or ';'
//
// Lists are comma separated. Relative paths are taken relative to the
// working directory.
struct RunConfig {
  // [data]
  std::string labels_csv;
  std::string image_dir;
  std::string manifest;    // default: <output.dir>/split.txt
  std::string train_list;  // optional official train/val image list
  std::string test_list;   // optional official test image list
  // [split]
  std::uint64_t split_seed = 0;
  double train_frac = 0.8;
  // [model]
  ModelConfig model;
  // [train]
  std::size_t batch_size = 32;
  double lr = 3e-5;
  std::size_t epochs = 10;
  std::string optimizer = "adamw";
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  // [output]
  std::string output_dir = "run";

  std::string manifest_path() const;
  bool operator==(const RunConfig& other) const;
};

RunConfig parse_config(std::string_view text, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& config);
void save_config(const std::string& path, const RunConfig& config);

// key is "section.key", e.g. "train.lr".
void apply_override(RunConfig& config, std::string_view key, std::string_view value);
std::string get_config_value(const RunConfig& config, std::string_view key);
std::vector<std::string> config_keys();

// Numeric ranges and model consistency; when require_data is set, the label
// file and image directory must exist.
void validate_config(const RunConfig& config, bool require_data);

}  // namespace swinchex
