#include "data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "errors.hpp"
#include "rng.hpp"

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

}  // namespace

const std::array<std::string, kNumClasses>& class_names() {
  static const std::array<std::string, kNumClasses> names{
      "Atelectasis", "Cardiomegaly", "Consolidation", "Edema",
      "Effusion",    "Emphysema",    "Fibrosis",      "Hernia",
      "Infiltration", "Mass",        "Nodule",        "Pleural_Thickening",
      "Pneumonia",   "Pneumothorax"};
  return names;
}

std::optional<std::size_t> class_index(std::string_view name) {
  std::string key(name);
  std::replace(key.begin(), key.end(), ' ', '_');
  const auto& names = class_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == key) return i;
  }
  return std::nullopt;
}

LabelVector parse_finding_labels(std::string_view field) {
  LabelVector labels{};
  const std::string text = trim(field);
  if (text.empty()) throw DataError("empty Finding Labels field");
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t bar = std::min(text.find('|', start), text.size());
    const std::string token = trim(std::string_view(text).substr(start, bar - start));
    if (token != "No Finding") {
      const auto idx = class_index(token);
      if (!idx) throw DataError("unknown label '" + token + "'");
      labels[*idx] = 1;
    }
    start = bar + 1;
  }
  return labels;
}

std::string format_finding_labels(const LabelVector& labels) {
  std::string out;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (!labels[i]) continue;
    if (!out.empty()) out += '|';
    out += class_names()[i];
  }
  return out.empty() ? "No Finding" : out;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r' && ch != '\n') {
      cur += ch;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::vector<PatientRecord> parse_label_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty label file");
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (trim(header[i]) == name) return i;
    }
    throw DataError(source + ": missing column '" + name + "'");
  };
  const std::size_t image_col = column("Image Index");
  const std::size_t label_col = column("Finding Labels");
  const std::size_t patient_col = column("Patient ID");
  const std::size_t needed = std::max({image_col, label_col, patient_col});

  std::vector<PatientRecord> records;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    const std::string where = source + ":" + std::to_string(line_no);
    if (fields.size() <= needed) throw DataError(where + ": too few columns");
    PatientRecord r;
    r.image_id = trim(fields[image_col]);
    r.patient_id = trim(fields[patient_col]);
    if (r.image_id.empty()) throw DataError(where + ": empty Image Index");
    if (r.patient_id.empty()) throw DataError(where + ": empty Patient ID");
    try {
      r.labels = parse_finding_labels(fields[label_col]);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    if (!seen.insert(r.image_id).second) {
      throw DataError(where + ": duplicate image id '" + r.image_id + "'");
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<PatientRecord> parse_label_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label file '" + path + "'");
  return parse_label_csv(in, path);
}

void write_label_csv(const std::string& path, const std::vector<PatientRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "Image Index,Finding Labels,Follow-up #,Patient ID\n";
  std::map<std::string, std::size_t> follow_up;
  for (const auto& r : records) {
    out << r.image_id << ',' << format_finding_labels(r.labels) << ','
        << follow_up[r.patient_id]++ << ',' << r.patient_id << '\n';
  }
  if (!out) throw DataError("failed writing '" + path + "'");
}

std::vector<std::string> read_image_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open image list '" + path + "'");
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    std::string id = trim(line);
    if (!id.empty()) ids.push_back(std::move(id));
  }
  return ids;
}

std::vector<PatientRecord> select_records(const std::vector<PatientRecord>& records,
                                          const std::vector<std::string>& image_ids) {
  std::unordered_map<std::string, const PatientRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.image_id, &r);
  std::vector<PatientRecord> out;
  out.reserve(image_ids.size());
  for (const auto& id : image_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("image '" + id + "' is not in the label file");
    out.push_back(*it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits

SplitManifest patient_split(const std::vector<PatientRecord>& records, double train_frac,
                            std::uint64_t seed) {
  if (records.empty()) throw DataError("patient_split: no records");
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw ConfigError("patient_split: train_frac must be in (0, 1)");
  }
  std::set<std::string> unique;
  for (const auto& r : records) unique.insert(r.patient_id);
  std::vector<std::string> patients(unique.begin(), unique.end());
  SplitMix64 rng(seed);
  shuffle(patients, rng);
  const auto n_train = static_cast<std::size_t>(
      std::floor(train_frac * static_cast<double>(patients.size()) + 1e-9));
  const std::unordered_set<std::string> train_patients(patients.begin(),
                                                       patients.begin() + static_cast<std::ptrdiff_t>(n_train));
  SplitManifest m;
  m.seed = seed;
  m.train_frac = train_frac;
  for (const auto& r : records) {
    (train_patients.count(r.patient_id) ? m.train : m.val).push_back(r.image_id);
  }
  return m;
}

std::string serialize_manifest(const SplitManifest& m) {
  std::ostringstream out;
  out << "seed=" << m.seed << '\n';
  out << "train_frac=" << format_double(m.train_frac) << '\n';
  for (const auto& id : m.train) out << "train " << id << '\n';
  for (const auto& id : m.val) out << "val " << id << '\n';
  return out.str();
}

SplitManifest parse_manifest(std::string_view text) {
  SplitManifest m;
  bool have_seed = false;
  bool have_frac = false;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string line = trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "manifest line " + std::to_string(line_no);
    if (line.starts_with("seed=")) {
      const std::string v = line.substr(5);
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), m.seed);
      if (ec != std::errc() || p != v.data() + v.size()) throw DataError(where + ": bad seed");
      have_seed = true;
    } else if (line.starts_with("train_frac=")) {
      const std::string v = line.substr(11);
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), m.train_frac);
      if (ec != std::errc() || p != v.data() + v.size()) throw DataError(where + ": bad train_frac");
      have_frac = true;
    } else if (line.starts_with("train ")) {
      m.train.push_back(trim(std::string_view(line).substr(6)));
    } else if (line.starts_with("val ")) {
      m.val.push_back(trim(std::string_view(line).substr(4)));
    } else {
      throw DataError(where + ": unrecognized entry '" + line + "'");
    }
  }
  if (!have_seed || !have_frac) throw DataError("manifest is missing the seed/train_frac header");
  return m;
}

void save_manifest(const std::string& path, const SplitManifest& manifest) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << serialize_manifest(manifest);
  if (!out) throw DataError("failed writing '" + path + "'");
}

SplitManifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str());
}

// ---------------------------------------------------------------------------
// Images and batches

Tensor image_to_tensor(const Image8& image, std::size_t target) {
  if (image.channels != 1 && image.channels != 3) {
    throw DataError("unsupported channel count " + std::to_string(image.channels));
  }
  if (image.width == 0 || image.height == 0 || target == 0) throw DataError("empty image");
  std::vector<double> out(target * target * 3);
  const double sy = static_cast<double>(image.height) / static_cast<double>(target);
  const double sx = static_cast<double>(image.width) / static_cast<double>(target);
  auto source_coord = [](std::size_t i, double ratio, std::size_t extent, std::size_t& lo,
                         std::size_t& hi, double& frac) {
    double c = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    c = std::clamp(c, 0.0, static_cast<double>(extent - 1));
    lo = static_cast<std::size_t>(std::floor(c));
    hi = std::min(lo + 1, extent - 1);
    frac = c - static_cast<double>(lo);
  };
  for (std::size_t y = 0; y < target; ++y) {
    std::size_t y0, y1;
    double fy;
    source_coord(y, sy, image.height, y0, y1, fy);
    for (std::size_t x = 0; x < target; ++x) {
      std::size_t x0, x1;
      double fx;
      source_coord(x, sx, image.width, x0, x1, fx);
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t ch = image.channels == 1 ? 0 : c;
        const double v00 = image.at(y0, x0, ch);
        const double v01 = image.at(y0, x1, ch);
        const double v10 = image.at(y1, x0, ch);
        const double v11 = image.at(y1, x1, ch);
        const double top = v00 + fx * (v01 - v00);
        const double bottom = v10 + fx * (v11 - v10);
        out[(y * target + x) * 3 + c] = (top + fy * (bottom - top)) / 255.0;
      }
    }
  }
  return Tensor(Shape{target, target, 3}, std::move(out));
}

Tensor load_image(const std::string& path, std::size_t target_size) {
  return image_to_tensor(read_png(path), target_size);
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, std::size_t batch_size,
                                                    std::uint64_t seed, bool shuffle_order) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  if (shuffle_order) {
    SplitMix64 rng(seed);
    shuffle(order, rng);
  }
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < count; i += batch_size) {
    groups.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                        order.begin() + static_cast<std::ptrdiff_t>(std::min(count, i + batch_size)));
  }
  return groups;
}

ImageSet::ImageSet(std::vector<PatientRecord> records, const std::string& image_dir,
                   std::size_t image_size)
    : records_(std::move(records)) {
  images_.reserve(records_.size());
  for (const auto& r : records_) {
    images_.push_back(load_image((std::filesystem::path(image_dir) / r.image_id).string(), image_size));
  }
}

ImageSet::ImageSet(std::vector<PatientRecord> records, std::vector<Tensor> images)
    : records_(std::move(records)), images_(std::move(images)) {
  if (records_.size() != images_.size()) throw DataError("ImageSet: records/images size mismatch");
  for (const auto& t : images_) {
    if (t.rank() != 3 || t.dim(0) != t.dim(1) || t.dim(2) != 3 ||
        t.shape() != images_.front().shape()) {
      throw DataError("ImageSet: images must share one [S,S,3] shape");
    }
  }
}

std::vector<Batch> make_batches(const ImageSet& set, std::size_t batch_size, std::uint64_t seed,
                                bool shuffle_order) {
  std::vector<Batch> batches;
  const std::size_t s = set.image_size();
  for (auto& group : batch_indices(set.size(), batch_size, seed, shuffle_order)) {
    const std::size_t b = group.size();
    std::vector<double> images;
    images.reserve(b * s * s * 3);
    std::vector<double> labels;
    labels.reserve(b * kNumClasses);
    for (std::size_t i : group) {
      auto px = set.image(i).data();
      images.insert(images.end(), px.begin(), px.end());
      for (auto l : set.records()[i].labels) labels.push_back(l);
    }
    batches.push_back(Batch{Tensor(Shape{b, s, s, 3}, std::move(images)),
                            Tensor(Shape{b, kNumClasses}, std::move(labels)), std::move(group)});
  }
  return batches;
}

}  // namespace swinchex
