#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "png_io.hpp"
#include "tensor.hpp"

namespace swinchex {

inline constexpr std::size_t kNumClasses = 14;

// Canonical class order: the fourteen ChestX-ray14 findings sorted
// alphabetically. Every label vector, head index and report row uses it.
const std::array<std::string, kNumClasses>& class_names();
// Accepts the dataset spelling ("Pleural_Thickening") and the spaced form.
std::optional<std::size_t> class_index(std::string_view name);

using LabelVector = std::array<std::uint8_t, kNumClasses>;

struct PatientRecord {
  std::string image_id;
  std::string patient_id;
  LabelVector labels{};
};

// "Effusion|Infiltration" -> multi-hot vector. "No Finding" -> zeros.
LabelVector parse_finding_labels(std::string_view field);
std::string format_finding_labels(const LabelVector& labels);

// RFC 4180 field splitting (quoted fields, doubled quotes).
std::vector<std::string> split_csv_line(std::string_view line);

// Data_Entry_2017.csv schema; needs the "Image Index", "Finding Labels" and
// "Patient ID" columns, in any position.
std::vector<PatientRecord> parse_label_csv(std::istream& in, const std::string& source = "<stream>");
std::vector<PatientRecord> parse_label_csv(const std::string& path);
void write_label_csv(const std::string& path, const std::vector<PatientRecord>& records);

// One image filename per line (train_val_list.txt / test_list.txt).
std::vector<std::string> read_image_list(const std::string& path);

// Records for the given image ids, in the order of ids.
std::vector<PatientRecord> select_records(const std::vector<PatientRecord>& records,
                                          const std::vector<std::string>& image_ids);

struct SplitManifest {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::uint64_t seed = 0;
  double train_frac = 0.8;

  bool operator==(const SplitManifest&) const = default;
};

// Patient-wise split. Unique patient ids are sorted, shuffled with
// SplitMix64(seed), and the first floor(train_frac * #patients) go to train.
// Images keep their input order inside each side.
SplitManifest patient_split(const std::vector<PatientRecord>& records, double train_frac,
                            std::uint64_t seed);

std::string serialize_manifest(const SplitManifest& manifest);
SplitManifest parse_manifest(std::string_view text);
void save_manifest(const std::string& path, const SplitManifest& manifest);
SplitManifest load_manifest(const std::string& path);

// Bilinear resize with half-pixel centres and edge clamping. Returns
// [target, target, 3] in [0, 1]; gray input is replicated to three channels.
Tensor image_to_tensor(const Image8& image, std::size_t target_size);
Tensor load_image(const std::string& path, std::size_t target_size = 224);

struct Batch {
  Tensor images;  // [B, S, S, 3]
  Tensor labels;  // [B, 14]
  std::vector<std::size_t> indices;  // positions in the source record list
};

// Index groups of at most batch_size; shuffled with SplitMix64(seed) first
// when requested. The last group may be short.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, std::size_t batch_size,
                                                    std::uint64_t seed, bool shuffle);

// Records plus their decoded images, loaded once and kept in memory.
class ImageSet {
 public:
  ImageSet(std::vector<PatientRecord> records, const std::string& image_dir,
           std::size_t image_size);
  // Pre-decoded images; tensors must be [S, S, 3].
  ImageSet(std::vector<PatientRecord> records, std::vector<Tensor> images);

  std::size_t size() const { return records_.size(); }
  const std::vector<PatientRecord>& records() const { return records_; }
  const Tensor& image(std::size_t i) const { return images_[i]; }
  std::size_t image_size() const { return images_.empty() ? 0 : images_.front().dim(0); }

 private:
  std::vector<PatientRecord> records_;
  std::vector<Tensor> images_;
};

std::vector<Batch> make_batches(const ImageSet& set, std::size_t batch_size, std::uint64_t seed,
                                bool shuffle);

}  // namespace swinchex
