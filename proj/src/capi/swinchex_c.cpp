#include "swinchex/swinchex.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "checks.hpp"
#include "commands.hpp"
#include "complexity.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "synthetic.hpp"

struct swx_config {
  swinchex::RunConfig value;
};

struct swx_model {
  swinchex::SwinModel value;
};

namespace {

thread_local std::string g_last_error;

swx_status fail(swx_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

// Maps the library's exception classes onto status codes.
template <typename F>
swx_status guarded(F&& body) {
  g_last_error.clear();
  try {
    return body();
  } catch (const swinchex::ConfigError& e) {
    return fail(SWX_ERR_CONFIG, e.what());
  } catch (const swinchex::DataError& e) {
    return fail(SWX_ERR_DATA, e.what());
  } catch (const swinchex::NumericError& e) {
    return fail(SWX_ERR_NUMERIC, e.what());
  } catch (const swinchex::ShapeError& e) {
    return fail(SWX_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(SWX_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SWX_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(SWX_ERR_INTERNAL, "unknown error");
  }
}

swinchex::LogFn make_log(swx_log_fn log, void* user) {
  if (!log) return {};
  return [log, user](const std::string& line) { log(line.c_str(), user); };
}

}  // namespace

#define SWX_REQUIRE(cond, what) \
  if (!(cond)) return fail(SWX_ERR_INVALID_ARGUMENT, what)

extern "C" {

const char* swx_version(void) { return "0.1.0"; }

const char* swx_last_error(void) { return g_last_error.c_str(); }

size_t swx_num_classes(void) { return swinchex::kNumClasses; }

const char* swx_class_name(size_t index) {
  if (index >= swinchex::kNumClasses) return nullptr;
  return swinchex::class_names()[index].c_str();
}

swx_status swx_config_new(swx_config** out) {
  SWX_REQUIRE(out, "swx_config_new: out is NULL");
  return guarded([&] {
    *out = new swx_config{};
    return SWX_OK;
  });
}

swx_status swx_config_load(const char* path, swx_config** out) {
  SWX_REQUIRE(path && out, "swx_config_load: NULL argument");
  return guarded([&] {
    *out = new swx_config{swinchex::load_config(path)};
    return SWX_OK;
  });
}

swx_status swx_config_set(swx_config* config, const char* key, const char* value) {
  SWX_REQUIRE(config && key && value, "swx_config_set: NULL argument");
  return guarded([&] {
    swinchex::apply_override(config->value, key, value);
    return SWX_OK;
  });
}

swx_status swx_config_get(const swx_config* config, const char* key, char* buf, size_t buf_size,
                          size_t* needed) {
  SWX_REQUIRE(config && key, "swx_config_get: NULL argument");
  return guarded([&] {
    const std::string value = swinchex::get_config_value(config->value, key);
    if (needed) *needed = value.size() + 1;
    if (!buf) return SWX_OK;
    if (buf_size < value.size() + 1) return fail(SWX_ERR_INVALID_ARGUMENT, "swx_config_get: buffer too small");
    std::memcpy(buf, value.c_str(), value.size() + 1);
    return SWX_OK;
  });
}

swx_status swx_config_save(const swx_config* config, const char* path) {
  SWX_REQUIRE(config && path, "swx_config_save: NULL argument");
  return guarded([&] {
    swinchex::save_config(path, config->value);
    return SWX_OK;
  });
}

void swx_config_free(swx_config* config) { delete config; }

swx_status swx_run_split(const swx_config* config, swx_log_fn log, void* user) {
  SWX_REQUIRE(config, "swx_run_split: config is NULL");
  return guarded([&] {
    swinchex::cmd_split(config->value, make_log(log, user));
    return SWX_OK;
  });
}

swx_status swx_run_train(const swx_config* config, swx_log_fn log, void* user) {
  SWX_REQUIRE(config, "swx_run_train: config is NULL");
  return guarded([&] {
    swinchex::cmd_train(config->value, make_log(log, user));
    return SWX_OK;
  });
}

swx_status swx_run_eval(const swx_config* config, const char* const* checkpoints, size_t count,
                        const char* split, const char* out_csv, swx_log_fn log, void* user) {
  SWX_REQUIRE(config && split && out_csv, "swx_run_eval: NULL argument");
  SWX_REQUIRE(count == 0 || checkpoints, "swx_run_eval: checkpoints is NULL");
  return guarded([&] {
    std::vector<std::string> paths(checkpoints, checkpoints + count);
    swinchex::cmd_eval(config->value, paths, split, out_csv, make_log(log, user));
    return SWX_OK;
  });
}

swx_status swx_run_gradcam(const swx_config* config, const char* checkpoint, const char* image_path,
                           const char* class_name, const char* out_png, swx_log_fn log, void* user) {
  SWX_REQUIRE(config && image_path && out_png, "swx_run_gradcam: NULL argument");
  return guarded([&] {
    std::optional<std::string> cls;
    if (class_name) cls = class_name;
    swinchex::cmd_gradcam(config->value, checkpoint ? checkpoint : "", image_path, cls, out_png,
                          make_log(log, user));
    return SWX_OK;
  });
}

swx_status swx_run_check(const swx_config* config, swx_log_fn log, void* user) {
  SWX_REQUIRE(config, "swx_run_check: config is NULL");
  return guarded([&] {
    const auto emit = make_log(log, user);
    const bool ok = swinchex::run_checks(config->value, [&](const swinchex::CheckResult& r) {
      if (emit) emit(std::string(r.passed ? "PASS " : "FAIL ") + r.name + ": " + r.detail);
    });
    return ok ? SWX_OK : fail(SWX_ERR_CHECK_FAILED, "one or more checks failed");
  });
}

swx_status swx_synthesize(const char* kind, size_t count, size_t patients, size_t image_size,
                          uint64_t seed, const char* dir) {
  SWX_REQUIRE(kind && dir, "swx_synthesize: NULL argument");
  return guarded([&] {
    swinchex::SyntheticSpec spec;
    spec.kind = swinchex::parse_synthetic_kind(kind);
    spec.count = count;
    spec.patients = patients;
    spec.image_size = image_size;
    spec.seed = seed;
    swinchex::write_synthetic_dataset(spec, dir);
    return SWX_OK;
  });
}

swx_status swx_omega_msa(uint64_t h, uint64_t w, uint64_t channels, uint64_t* out) {
  SWX_REQUIRE(out, "swx_omega_msa: out is NULL");
  return guarded([&] {
    *out = swinchex::omega_msa({h, w, channels, 0});
    return SWX_OK;
  });
}

swx_status swx_omega_wmsa(uint64_t h, uint64_t w, uint64_t channels, uint64_t window, uint64_t* out) {
  SWX_REQUIRE(out, "swx_omega_wmsa: out is NULL");
  return guarded([&] {
    *out = swinchex::omega_wmsa({h, w, channels, window});
    return SWX_OK;
  });
}

swx_status swx_measure_attention_macs(uint64_t h, uint64_t w, uint64_t channels, uint64_t window,
                                      int windowed, uint64_t* out) {
  SWX_REQUIRE(out, "swx_measure_attention_macs: out is NULL");
  return guarded([&] {
    *out = swinchex::measure_attention_macs(
        {h, w, channels, window},
        windowed ? swinchex::AttentionMode::windowed : swinchex::AttentionMode::global);
    return SWX_OK;
  });
}

swx_status swx_complexity_csv(const size_t* sizes, size_t n_sizes, const size_t* channels,
                              size_t n_channels, const size_t* windows, size_t n_windows,
                              int measure, char** out) {
  SWX_REQUIRE(out && (sizes || !n_sizes) && (channels || !n_channels) && (windows || !n_windows),
              "swx_complexity_csv: NULL argument");
  return guarded([&] {
    const std::string csv = swinchex::complexity_csv({sizes, sizes + n_sizes},
                                                     {channels, channels + n_channels},
                                                     {windows, windows + n_windows}, measure != 0);
    char* copy = new char[csv.size() + 1];
    std::memcpy(copy, csv.c_str(), csv.size() + 1);
    *out = copy;
    return SWX_OK;
  });
}

void swx_string_free(char* s) { delete[] s; }

swx_status swx_model_load(const char* checkpoint, const swx_config* fallback, swx_model** out) {
  SWX_REQUIRE(checkpoint && out, "swx_model_load: NULL argument");
  return guarded([&] {
    const swinchex::RunConfig defaults;
    *out = new swx_model{swinchex::load_model(checkpoint, fallback ? fallback->value : defaults)};
    return SWX_OK;
  });
}

size_t swx_model_image_size(const swx_model* model) {
  return model ? model->value.config().image_size : 0;
}

swx_status swx_model_predict(const swx_model* model, const double* image, size_t height,
                             size_t width, double* probs) {
  SWX_REQUIRE(model && image && probs, "swx_model_predict: NULL argument");
  const size_t size = model->value.config().image_size;
  SWX_REQUIRE(height == size && width == size,
              "swx_model_predict: image must be at the model resolution");
  return guarded([&] {
    swinchex::NoGradGuard no_grad;
    const swinchex::Tensor x({height, width, 3}, std::vector<double>(image, image + height * width * 3));
    const swinchex::Tensor p = model->value.forward(x);
    std::memcpy(probs, p.data().data(), swinchex::kNumClasses * sizeof(double));
    return SWX_OK;
  });
}

void swx_model_free(swx_model* model) { delete model; }

}  // extern "C"
