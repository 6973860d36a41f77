#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "swinchex/swinchex.h"

namespace {

int exit_code(swx_status status) {
  switch (status) {
    case SWX_OK: return 0;
    case SWX_ERR_CONFIG:
    case SWX_ERR_INVALID_ARGUMENT: return 2;
    case SWX_ERR_DATA: return 3;
    case SWX_ERR_NUMERIC: return 4;
    case SWX_ERR_CHECK_FAILED: return 5;
    default: return 1;
  }
}

void print_line(const char* line, void*) { std::cout << line << '\n' << std::flush; }

struct ConfigDeleter {
  void operator()(swx_config* c) const { swx_config_free(c); }
};
using ConfigPtr = std::unique_ptr<swx_config, ConfigDeleter>;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config,-c", opts.config_path, "Run configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set,-s", opts.overrides, "Override a config key: section.key=value");
  cmd->add_option("overrides", opts.overrides, "Further section.key=value overrides");
}

// Loads --config (or the defaults) and applies overrides in order.
swx_status build_config(const CommonOptions& opts, ConfigPtr& out) {
  swx_config* raw = nullptr;
  swx_status st = opts.config_path.empty() ? swx_config_new(&raw)
                                           : swx_config_load(opts.config_path.c_str(), &raw);
  if (st != SWX_OK) return st;
  out.reset(raw);
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "error: override '" << kv << "' is not of the form section.key=value\n";
      return SWX_ERR_CONFIG;
    }
    st = swx_config_set(out.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (st != SWX_OK) return st;
  }
  return SWX_OK;
}

std::string config_value(const swx_config* config, const char* key) {
  size_t needed = 0;
  if (swx_config_get(config, key, nullptr, 0, &needed) != SWX_OK) return {};
  std::string value(needed, '\0');
  swx_config_get(config, key, value.data(), value.size(), &needed);
  value.resize(needed - 1);
  return value;
}

int finish(swx_status status) {
  if (status != SWX_OK && status != SWX_ERR_CHECK_FAILED) {
    std::cerr << "error: " << swx_last_error() << '\n';
  } else if (status == SWX_ERR_CHECK_FAILED) {
    std::cerr << "check suite failed\n";
  }
  return exit_code(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SwinCheX: windowed-attention multi-label chest X-ray classifier"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(swx_version()));

  CommonOptions common;

  auto* split = app.add_subcommand("split", "Write the patient-wise train/val manifest");
  add_common(split, common);

  auto* train = app.add_subcommand("train", "Train, checkpoint every epoch and record the best epoch");
  add_common(train, common);

  std::vector<std::string> eval_checkpoints;
  std::string eval_split = "val";
  std::string eval_out;
  auto* eval = app.add_subcommand("eval", "Per-class AUC report for one or more checkpoints");
  add_common(eval, common);
  eval->add_option("--checkpoint", eval_checkpoints, "Checkpoint(s); default: recorded best epoch");
  eval->add_option("--split", eval_split, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--out,-o", eval_out, "Report CSV (default <output.dir>/report_<split>.csv)");

  std::string cam_checkpoint, cam_image, cam_class, cam_out;
  auto* gradcam = app.add_subcommand("gradcam", "Grad-CAM heatmap for one image");
  add_common(gradcam, common);
  gradcam->add_option("--checkpoint", cam_checkpoint, "Checkpoint; default: recorded best epoch");
  gradcam->add_option("--image", cam_image, "Input PNG")->required()->check(CLI::ExistingFile);
  gradcam->add_option("--class", cam_class, "Target class name; default: dominant logit");
  gradcam->add_option("--out,-o", cam_out, "Output PNG (default <output.dir>/gradcam.png)");

  std::vector<size_t> sizes{7, 14, 28, 56}, channels{96, 192}, windows{7};
  bool no_measure = false;
  std::string complexity_out;
  auto* complexity = app.add_subcommand("complexity", "Attention cost table: formulas and measured MACs");
  add_common(complexity, common);
  complexity->add_option("--sizes", sizes, "Feature map sides h = w")->delimiter(',');
  complexity->add_option("--channels", channels, "Channel counts C")->delimiter(',');
  complexity->add_option("--windows", windows, "Window sizes M")->delimiter(',');
  complexity->add_flag("--no-measure", no_measure, "Skip the instrumented runs");
  complexity->add_option("--out,-o", complexity_out, "Write the CSV here instead of stdout");

  auto* check = app.add_subcommand("check", "Gradient checks and numerical oracles");
  add_common(check, common);

  std::string synth_kind = "glyphs", synth_dir;
  size_t synth_count = 96, synth_patients = 48, synth_size = 32;
  uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset in the ChestX-ray14 layout");
  synth->add_option("--kind", synth_kind, "glyphs or quadrant")->check(CLI::IsMember({"glyphs", "quadrant"}));
  synth->add_option("--count", synth_count, "Number of images");
  synth->add_option("--patients", synth_patients, "Number of patients");
  synth->add_option("--size", synth_size, "Image side in pixels");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--out,-o", synth_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (synth->parsed()) {
    return finish(swx_synthesize(synth_kind.c_str(), synth_count, synth_patients, synth_size,
                                 synth_seed, synth_dir.c_str()));
  }

  ConfigPtr config;
  if (swx_status st = build_config(common, config); st != SWX_OK) return finish(st);
  const std::string output_dir = config_value(config.get(), "output.dir");

  if (split->parsed()) return finish(swx_run_split(config.get(), print_line, nullptr));
  if (train->parsed()) return finish(swx_run_train(config.get(), print_line, nullptr));
  if (check->parsed()) return finish(swx_run_check(config.get(), print_line, nullptr));

  if (eval->parsed()) {
    if (eval_out.empty()) eval_out = output_dir + "/report_" + eval_split + ".csv";
    std::vector<const char*> paths;
    for (const auto& p : eval_checkpoints) paths.push_back(p.c_str());
    const swx_status st = swx_run_eval(config.get(), paths.data(), paths.size(), eval_split.c_str(),
                                       eval_out.c_str(), print_line, nullptr);
    if (st == SWX_OK) std::cout << "report -> " << eval_out << '\n';
    return finish(st);
  }

  if (gradcam->parsed()) {
    if (cam_out.empty()) cam_out = output_dir + "/gradcam.png";
    return finish(swx_run_gradcam(config.get(), cam_checkpoint.empty() ? nullptr : cam_checkpoint.c_str(),
                                  cam_image.c_str(), cam_class.empty() ? nullptr : cam_class.c_str(),
                                  cam_out.c_str(), print_line, nullptr));
  }

  if (complexity->parsed()) {
    char* csv = nullptr;
    const swx_status st = swx_complexity_csv(sizes.data(), sizes.size(), channels.data(), channels.size(),
                                             windows.data(), windows.size(), no_measure ? 0 : 1, &csv);
    if (st != SWX_OK) return finish(st);
    if (complexity_out.empty()) {
      std::cout << csv;
    } else {
      std::ofstream out(complexity_out, std::ios::binary | std::ios::trunc);
      out << csv;
      if (!out) {
        swx_string_free(csv);
        std::cerr << "error: cannot write '" << complexity_out << "'\n";
        return 3;
      }
    }
    swx_string_free(csv);
    return 0;
  }
  return 1;
}
