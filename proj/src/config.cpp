#include "config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "errors.hpp"

namespace swinchex {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || p != text.data() + text.size() || text.empty()) {
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + text + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  if (trim(text).empty()) return out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    out.push_back(parse_number<std::size_t>(key, trim(std::string_view(text).substr(start, comma - start))));
    start = comma + 1;
  }
  return out;
}

std::string format_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string& key, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field number_field(const char* key, T RunConfig::*member) {
  return {key,
          [member](RunConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_number<T>(k, v);
          },
          [member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_double(c.*member);
            else return std::to_string(c.*member);
          }};
}

template <typename T>
Field model_number_field(const char* key, T ModelConfig::*member) {
  return {key,
          [member](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.*member = parse_number<T>(k, v);
          },
          [member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_double(c.model.*member);
            else return std::to_string(c.model.*member);
          }};
}

Field string_field(const char* key, std::string RunConfig::*member) {
  return {key, [member](RunConfig& c, const std::string&, const std::string& v) { c.*member = v; },
          [member](const RunConfig& c) { return c.*member; }};
}

Field model_list_field(const char* key, std::vector<std::size_t> ModelConfig::*member) {
  return {key,
          [member](RunConfig& c, const std::string& k, const std::string& v) {
            c.model.*member = parse_list(k, v);
          },
          [member](const RunConfig& c) { return format_list(c.model.*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      string_field("data.labels_csv", &RunConfig::labels_csv),
      string_field("data.image_dir", &RunConfig::image_dir),
      string_field("data.manifest", &RunConfig::manifest),
      string_field("data.train_list", &RunConfig::train_list),
      string_field("data.test_list", &RunConfig::test_list),
      number_field("split.seed", &RunConfig::split_seed),
      number_field("split.train_frac", &RunConfig::train_frac),
      model_number_field("model.image_size", &ModelConfig::image_size),
      model_number_field("model.patch_size", &ModelConfig::patch_size),
      model_number_field("model.embed_dim", &ModelConfig::embed_dim),
      model_list_field("model.depths", &ModelConfig::depths),
      model_list_field("model.num_heads", &ModelConfig::num_heads),
      model_number_field("model.window", &ModelConfig::window),
      model_number_field("model.mlp_ratio", &ModelConfig::mlp_ratio),
      {"model.head_variant",
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.model.head_variant = parse_head_variant(v);
       },
       [](const RunConfig& c) { return to_string(c.model.head_variant); }},
      model_list_field("model.head_widths", &ModelConfig::head_widths),
      model_number_field("model.num_classes", &ModelConfig::num_classes),
      {"model.qkv_bias",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.model.qkv_bias = parse_bool(k, v);
       },
       [](const RunConfig& c) { return std::string(c.model.qkv_bias ? "true" : "false"); }},
      {"model.block_activation",
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.model.block_activation = parse_activation(v);
       },
       [](const RunConfig& c) { return to_string(c.model.block_activation); }},
      {"model.head_activation",
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.model.head_activation = parse_activation(v);
       },
       [](const RunConfig& c) { return to_string(c.model.head_activation); }},
      model_number_field("model.layer_norm_eps", &ModelConfig::layer_norm_eps),
      model_number_field("model.init_std", &ModelConfig::init_std),
      number_field("train.batch_size", &RunConfig::batch_size),
      number_field("train.lr", &RunConfig::lr),
      number_field("train.epochs", &RunConfig::epochs),
      {"train.optimizer",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v != "adamw" && v != "sgd") throw ConfigError(k + ": expected adamw|sgd, got '" + v + "'");
         c.optimizer = v;
       },
       [](const RunConfig& c) { return c.optimizer; }},
      number_field("train.weight_decay", &RunConfig::weight_decay),
      number_field("train.beta1", &RunConfig::beta1),
      number_field("train.beta2", &RunConfig::beta2),
      number_field("train.seed", &RunConfig::seed),
      string_field("output.dir", &RunConfig::output_dir),
  };
  return table;
}

const Field& find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (key == f.key) return f;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

std::string RunConfig::manifest_path() const {
  if (!manifest.empty()) return manifest;
  return (std::filesystem::path(output_dir) / "split.txt").string();
}

bool RunConfig::operator==(const RunConfig& other) const {
  for (const auto& f : fields()) {
    if (f.get(*this) != f.get(other)) return false;
  }
  return true;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.key);
  return keys;
}

void apply_override(RunConfig& config, std::string_view key, std::string_view value) {
  const Field& f = find_field(key);
  f.set(config, std::string(key), trim(value));
}

std::string get_config_value(const RunConfig& config, std::string_view key) {
  return find_field(key).get(config);
}

RunConfig parse_config(std::string_view text, const std::string& source) {
  RunConfig config;
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no);
    if (auto hash = line.find_first_of("#;"); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    if (section.empty()) throw ConfigError(where + ": key outside of any [section]");
    const std::string key = section + "." + trim(std::string_view(line).substr(0, eq));
    try {
      apply_override(config, key, std::string_view(line).substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": [" + section + "] " + e.what());
    }
  }
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

std::string serialize_config(const RunConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    const std::string key = f.key;
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    out << key.substr(dot + 1) << " = " << f.get(config) << '\n';
  }
  return out.str();
}

void save_config(const std::string& path, const RunConfig& config) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << serialize_config(config);
  if (!out) throw DataError("failed writing '" + path + "'");
}

void validate_config(const RunConfig& c, bool require_data) {
  if (!(c.train_frac > 0.0 && c.train_frac < 1.0)) {
    throw ConfigError("[split] train_frac: must be in (0, 1), got " + format_double(c.train_frac));
  }
  if (!(c.lr > 0.0)) throw ConfigError("[train] lr: must be > 0, got " + format_double(c.lr));
  if (c.batch_size == 0) throw ConfigError("[train] batch_size: must be >= 1");
  if (c.model.window < 1) throw ConfigError("[model] window: must be >= 1");
  if (c.model.num_classes != 14) throw ConfigError("[model] num_classes: must be 14");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    throw ConfigError("[train] beta1/beta2: must be in [0, 1)");
  }
  if (!(c.weight_decay >= 0.0)) throw ConfigError("[train] weight_decay: must be >= 0");
  try {
    c.model.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("[model] ") + e.what());
  }
  if (!require_data) return;
  namespace fs = std::filesystem;
  auto need = [](const std::string& path, const char* field, bool dir) {
    if (path.empty()) throw ConfigError(std::string("[data] ") + field + ": not set");
    std::error_code ec;
    const bool ok = dir ? fs::is_directory(path, ec) : fs::is_regular_file(path, ec);
    if (!ok) throw ConfigError(std::string("[data] ") + field + ": '" + path + "' does not exist");
  };
  need(c.labels_csv, "labels_csv", false);
  need(c.image_dir, "image_dir", true);
  if (!c.train_list.empty()) need(c.train_list, "train_list", false);
  if (!c.test_list.empty()) need(c.test_list, "test_list", false);
}

}  // namespace swinchex
