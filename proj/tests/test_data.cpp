#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "data.hpp"
#include "errors.hpp"
#include "oracles.hpp"
#include "png_io.hpp"
#include "rng.hpp"
#include "synthetic.hpp"

using namespace swinchex;

namespace {

std::vector<PatientRecord> records_for(std::size_t images, std::size_t patients) {
  std::vector<PatientRecord> out;
  for (std::size_t i = 0; i < images; ++i) {
    PatientRecord r;
    r.image_id = "img" + std::to_string(i) + ".png";
    r.patient_id = "p" + std::to_string(i % patients);
    r.labels[i % kNumClasses] = 1;
    out.push_back(r);
  }
  return out;
}

std::set<std::string> patients_of(const std::vector<PatientRecord>& records, const std::vector<std::string>& ids) {
  std::map<std::string, std::string> owner;
  for (const auto& r : records) owner[r.image_id] = r.patient_id;
  std::set<std::string> out;
  for (const auto& id : ids) out.insert(owner.at(id));
  return out;
}

}  // namespace

TEST_SUITE("data-pipeline") {

TEST_CASE("finding labels map onto the canonical order") {
  const LabelVector v = parse_finding_labels("Effusion|Infiltration");
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    const bool expected = class_names()[k] == "Effusion" || class_names()[k] == "Infiltration";
    CHECK(v[k] == (expected ? 1 : 0));
  }
  const LabelVector none = parse_finding_labels("No Finding");
  CHECK(std::all_of(none.begin(), none.end(), [](auto x) { return x == 0; }));
  CHECK_THROWS_WITH_AS(parse_finding_labels("Efusion"), doctest::Contains("Efusion"), DataError);
  CHECK(class_index("Pleural Thickening") == class_index("Pleural_Thickening"));
  CHECK(format_finding_labels(v) == "Effusion|Infiltration");
  CHECK(format_finding_labels(none) == "No Finding");
}

TEST_CASE("label CSV columns are found by name") {
  std::istringstream in(
      "Patient ID,Image Index,Follow-up #,Finding Labels\n"
      "7,a.png,0,\"Mass|Nodule\"\n"
      "9,b.png,1,No Finding\n");
  const auto records = parse_label_csv(in);
  REQUIRE(records.size() == 2);
  CHECK(records[0].image_id == "a.png");
  CHECK(records[0].patient_id == "7");
  CHECK(records[0].labels[*class_index("Mass")] == 1);
  CHECK(records[0].labels[*class_index("Nodule")] == 1);
  CHECK(split_csv_line("a,\"b,\"\"c\"\"\",d") == std::vector<std::string>{"a", "b,\"c\"", "d"});
  std::istringstream missing("Image Index,Finding Labels\nx.png,Mass\n");
  CHECK_THROWS_AS(parse_label_csv(missing), DataError);
}

TEST_CASE("patient split examples") {
  const auto records = records_for(30, 10);
  const SplitManifest m = patient_split(records, 0.8, 3);
  CHECK(patients_of(records, m.train).size() == 8);
  CHECK(patients_of(records, m.val).size() == 2);
  CHECK(serialize_manifest(patient_split(records, 0.8, 3)) == serialize_manifest(m));
  CHECK(parse_manifest(serialize_manifest(m)) == m);
  CHECK_THROWS_AS(patient_split(records, 1.0, 0), ConfigError);
}

TEST_CASE("patient split is disjoint and covers every image once") {
  SplitMix64 rng(5);
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto records = records_for(20 + rng.below(80), 3 + rng.below(30));
    const SplitManifest m = patient_split(records, 0.8, seed);
    const auto train = patients_of(records, m.train);
    const auto val = patients_of(records, m.val);
    for (const auto& p : train) CHECK(val.count(p) == 0);
    std::vector<std::string> all = m.train;
    all.insert(all.end(), m.val.begin(), m.val.end());
    std::sort(all.begin(), all.end());
    std::vector<std::string> want;
    for (const auto& r : records) want.push_back(r.image_id);
    std::sort(want.begin(), want.end());
    CHECK(all == want);
  }
}

TEST_CASE("image conversion") {
  Image8 gray{1024, 1024, 1, std::vector<std::uint8_t>(1024 * 1024)};
  SplitMix64 rng(6);
  for (auto& p : gray.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  const Tensor t = image_to_tensor(gray, 224);
  REQUIRE(t.shape() == Shape{224, 224, 3});
  for (std::size_t i = 0; i < 224 * 224; ++i) {
    CHECK(t.data()[i * 3] == t.data()[i * 3 + 1]);
    CHECK(t.data()[i * 3] == t.data()[i * 3 + 2]);
  }

  Image8 flat{40, 40, 3, std::vector<std::uint8_t>(40 * 40 * 3, 100)};
  const Tensor resized = image_to_tensor(flat, 17);
  for (double v : resized.data()) CHECK(v == doctest::Approx(100.0 / 255.0).epsilon(1e-15));

  Image8 same{8, 8, 3, std::vector<std::uint8_t>(8 * 8 * 3)};
  for (auto& p : same.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  const Tensor id = image_to_tensor(same, 8);
  for (std::size_t i = 0; i < same.pixels.size(); ++i) CHECK(id.data()[i] == same.pixels[i] / 255.0);
}

TEST_CASE("png round trip") {
  const auto dir = oracle::scratch_dir("png");
  Image8 img{5, 3, 3, std::vector<std::uint8_t>(45)};
  for (std::size_t i = 0; i < 45; ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 5);
  write_png((dir / "a.png").string(), img);
  const Image8 back = read_png((dir / "a.png").string());
  CHECK(back.width == 5);
  CHECK(back.height == 3);
  CHECK(back.pixels == img.pixels);
  CHECK_THROWS_AS(read_png((dir / "missing.png").string()), DataError);
}

TEST_CASE("batching") {
  const auto groups = batch_indices(70, 32, 0, false);
  REQUIRE(groups.size() == 3);
  CHECK(groups[0].size() == 32);
  CHECK(groups[1].size() == 32);
  CHECK(groups[2].size() == 6);
  std::vector<std::size_t> flat;
  for (const auto& g : groups) flat.insert(flat.end(), g.begin(), g.end());
  for (std::size_t i = 0; i < 70; ++i) CHECK(flat[i] == i);

  auto order = [](std::uint64_t seed) {
    std::vector<std::size_t> out;
    for (const auto& g : batch_indices(70, 32, seed, true)) out.insert(out.end(), g.begin(), g.end());
    return out;
  };
  const auto a = order(4);
  const auto b = order(5);
  CHECK(a != b);
  CHECK(order(4) == a);
  auto sa = a, sb = b;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  CHECK(sa == sb);
  CHECK(sa == flat);
}

TEST_CASE("batches carry binary labels and unit-range images") {
  SyntheticSpec spec;
  spec.count = 40;
  std::vector<Image8> images;
  const SyntheticDataset ds = generate_synthetic(spec, &images);
  std::vector<Tensor> tensors;
  for (const auto& img : images) tensors.push_back(image_to_tensor(img, 32));
  const ImageSet set(ds.records, tensors);
  const auto batches = make_batches(set, 16, 1, true);
  REQUIRE(batches.size() == 3);
  for (const auto& b : batches) {
    for (double v : b.labels.data()) CHECK((v == 0.0 || v == 1.0));
    for (double v : b.images.data()) CHECK((v >= 0.0 && v <= 1.0));
    for (std::size_t r = 0; r < b.indices.size(); ++r)
      for (std::size_t k = 0; k < kNumClasses; ++k)
        CHECK(b.labels.data()[r * kNumClasses + k] == ds.records[b.indices[r]].labels[k]);
  }
}

TEST_CASE("synthetic datasets are reproducible and match their labels") {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::quadrant;
  spec.count = 24;
  std::vector<Image8> a, b;
  const SyntheticDataset da = generate_synthetic(spec, &a);
  generate_synthetic(spec, &b);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].pixels == b[i].pixels);
  for (std::size_t i = 0; i < da.records.size(); ++i) {
    const bool positive = da.records[i].labels[0] == 1;
    CHECK(positive == (da.quadrants[i] >= 0));
    if (!positive) continue;
    // The bright square must lie inside its quadrant only.
    const std::size_t half = spec.image_size / 2;
    for (std::size_t y = 0; y < spec.image_size; ++y)
      for (std::size_t x = 0; x < spec.image_size; ++x) {
        const int q = static_cast<int>((y >= half) * 2 + (x >= half));
        if (a[i].at(y, x, 0) >= 200) CHECK(q == da.quadrants[i]);
      }
  }
}

}  // TEST_SUITE
