#include "synthetic.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "errors.hpp"

namespace swinchex {

namespace {

constexpr double kGlyphPrevalence = 0.3;
constexpr std::uint8_t kNoiseMax = 40;

Image8 noise_image(SplitMix64& rng, std::size_t size) {
  Image8 img;
  img.width = img.height = size;
  img.channels = 1;
  img.pixels.resize(size * size);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(kNoiseMax + 1));
  return img;
}

std::uint8_t bright(SplitMix64& rng) { return static_cast<std::uint8_t>(215 + rng.below(41)); }

}  // namespace

SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "glyphs") return SyntheticKind::glyphs;
  if (name == "quadrant") return SyntheticKind::quadrant;
  throw ConfigError("unknown synthetic dataset kind '" + name + "' (expected glyphs|quadrant)");
}

bool glyph_pixel(std::size_t cls, std::size_t y, std::size_t x, std::size_t n) {
  // One-pixel margin; u, v index the inner (n-2) x (n-2) area.
  if (y == 0 || x == 0 || y + 1 >= n || x + 1 >= n) return false;
  const std::size_t u = y - 1;
  const std::size_t v = x - 1;
  const std::size_t m = n - 2;
  const std::size_t mid = m / 2;
  switch (cls) {
    case 0: return true;                                          // solid block
    case 1: return u == 0 || v == 0 || u + 1 == m || v + 1 == m;  // hollow box
    case 2: return u % 2 == 0;                                    // horizontal stripes
    case 3: return v % 2 == 0;                                    // vertical stripes
    case 4: return (u + v) % 2 == 0;                              // fine checker
    case 5: return u == v || u == v + 1;                          // diagonal
    case 6: return u + v + 1 == m || u + v == m;                  // anti-diagonal
    case 7: return u == mid || u + 1 == mid || v == mid || v + 1 == mid;  // plus
    case 8: return u == v || u + v + 1 == m;                      // cross
    case 9: return (u == mid || u + 1 == mid) && (v == mid || v + 1 == mid);  // dot
    case 10: return u < mid;                                      // top half
    case 11: return v < mid;                                      // left half
    case 12: return ((u / 2) + (v / 2)) % 2 == 0;                 // coarse checker
    case 13: return (u < 2 || u + 2 >= m) && (v < 2 || v + 2 >= m);  // corner dots
    default: return false;
  }
}

SyntheticSample make_glyph_sample(SplitMix64& rng, std::size_t size) {
  if (size % 4 != 0 || size < 24) throw ConfigError("glyph images need a size divisible by 4, >= 24");
  SyntheticSample s;
  s.image = noise_image(rng, size);
  const std::size_t cell = size / 4;
  std::vector<std::size_t> free_cells(16);
  for (std::size_t i = 0; i < 16; ++i) free_cells[i] = i;
  shuffle(free_cells, rng);
  std::size_t next_cell = 0;
  for (std::size_t cls = 0; cls < kNumClasses; ++cls) {
    if (rng.uniform() >= kGlyphPrevalence) continue;
    s.labels[cls] = 1;
    const std::size_t c = free_cells[next_cell++];
    const std::size_t y0 = (c / 4) * cell;
    const std::size_t x0 = (c % 4) * cell;
    const std::uint8_t level = bright(rng);
    for (std::size_t y = 0; y < cell; ++y)
      for (std::size_t x = 0; x < cell; ++x)
        if (glyph_pixel(cls, y, x, cell)) s.image.at(y0 + y, x0 + x, 0) = level;
  }
  return s;
}

SyntheticSample make_quadrant_sample(SplitMix64& rng, std::size_t size, bool positive) {
  if (size % 2 != 0 || size < 16) throw ConfigError("quadrant images need an even size >= 16");
  SyntheticSample s;
  s.image = noise_image(rng, size);
  if (!positive) return s;
  s.labels[0] = 1;
  s.quadrant = static_cast<int>(rng.below(4));
  const std::size_t half = size / 2;
  const std::size_t side = half / 3 + rng.below(half / 3 + 1);  // [half/3, 2 half/3]
  const std::size_t slack = half - side - 2;
  const std::size_t qy = (s.quadrant / 2) * half;
  const std::size_t qx = (s.quadrant % 2) * half;
  const std::size_t y0 = qy + 1 + rng.below(slack + 1);
  const std::size_t x0 = qx + 1 + rng.below(slack + 1);
  const std::uint8_t level = bright(rng);
  for (std::size_t y = y0; y < y0 + side; ++y)
    for (std::size_t x = x0; x < x0 + side; ++x) s.image.at(y, x, 0) = level;
  return s;
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec, std::vector<Image8>* images) {
  if (spec.count == 0 || spec.patients == 0) throw ConfigError("synthetic dataset needs count and patients > 0");
  SplitMix64 rng(spec.seed);
  SyntheticDataset ds;
  for (std::size_t i = 0; i < spec.count; ++i) {
    SyntheticSample s = spec.kind == SyntheticKind::glyphs
                            ? make_glyph_sample(rng, spec.image_size)
                            : make_quadrant_sample(rng, spec.image_size, i % 2 == 0);
    char id[32];
    std::snprintf(id, sizeof(id), "%08zu_000.png", i + 1);
    char patient[32];
    std::snprintf(patient, sizeof(patient), "%zu", i % spec.patients + 1);
    ds.records.push_back(PatientRecord{id, patient, s.labels});
    ds.quadrants.push_back(s.quadrant);
    if (images) images->push_back(std::move(s.image));
  }
  return ds;
}

SyntheticDataset write_synthetic_dataset(const SyntheticSpec& spec, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "images", ec);
  if (ec) throw DataError("cannot create '" + dir + "/images': " + ec.message());
  std::vector<Image8> images;
  SyntheticDataset ds = generate_synthetic(spec, &images);
  for (std::size_t i = 0; i < images.size(); ++i) {
    write_png((fs::path(dir) / "images" / ds.records[i].image_id).string(), images[i]);
  }
  write_label_csv((fs::path(dir) / "Data_Entry_2017.csv").string(), ds.records);
  if (spec.kind == SyntheticKind::quadrant) {
    std::ofstream out(fs::path(dir) / "quadrants.csv", std::ios::trunc);
    out << "Image Index,Quadrant\n";
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
      out << ds.records[i].image_id << ',' << ds.quadrants[i] << '\n';
    }
    if (!out) throw DataError("failed writing quadrants.csv");
  }
  return ds;
}

}  // namespace swinchex
