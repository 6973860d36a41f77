#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "data.hpp"
#include "png_io.hpp"
#include "rng.hpp"

namespace swinchex {

// Stand-in datasets so the whole pipeline runs without the real X-rays.
//
// glyphs:   the image is a 4x4 grid of cells over a dark noise background;
//           each class is present independently with probability 0.3 and
//           draws its own fixed bright pattern into a random free cell.
// quadrant: only the first class is used; positives carry one bright square
//           lying entirely inside a random quadrant, negatives are noise.
enum class SyntheticKind { glyphs, quadrant };

SyntheticKind parse_synthetic_kind(const std::string& name);

struct SyntheticSample {
  Image8 image;
  LabelVector labels{};
  int quadrant = -1;  // 0 TL, 1 TR, 2 BL, 3 BR for quadrant positives
};

// Glyph pattern of class cls on an n x n cell (n >= 6).
bool glyph_pixel(std::size_t cls, std::size_t y, std::size_t x, std::size_t n);

SyntheticSample make_glyph_sample(SplitMix64& rng, std::size_t image_size);
SyntheticSample make_quadrant_sample(SplitMix64& rng, std::size_t image_size, bool positive);

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::glyphs;
  std::size_t count = 96;
  std::size_t patients = 48;  // image i belongs to patient i mod patients
  std::uint64_t seed = 0;
  std::size_t image_size = 32;
};

struct SyntheticDataset {
  std::vector<PatientRecord> records;
  std::vector<int> quadrants;  // per record, -1 when not applicable
};

SyntheticDataset generate_synthetic(const SyntheticSpec& spec,
                                    std::vector<Image8>* images = nullptr);

// Writes <dir>/images/<id>.png, <dir>/Data_Entry_2017.csv and, for the
// quadrant kind, <dir>/quadrants.csv (image id, quadrant).
SyntheticDataset write_synthetic_dataset(const SyntheticSpec& spec, const std::string& dir);

}  // namespace swinchex
