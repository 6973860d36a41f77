#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "commands.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace swinchex;
namespace fs = std::filesystem;

namespace {

RunConfig glyph_run(const fs::path& dir, std::size_t count, std::size_t epochs) {
  SyntheticSpec spec;
  spec.count = count;
  spec.patients = count / 2;
  spec.seed = 1;
  write_synthetic_dataset(spec, (dir / "data").string());
  RunConfig c;
  c.labels_csv = (dir / "data" / "Data_Entry_2017.csv").string();
  c.image_dir = (dir / "data" / "images").string();
  c.output_dir = (dir / "run").string();
  c.model.init_std = 0.2;
  c.lr = 1e-3;
  c.epochs = epochs;
  return c;
}

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::map<std::string, std::string> out;
  std::istringstream in(oracle::read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config text round trip") {
  RunConfig c;
  c.lr = 1.5e-4;
  c.model.depths = {2, 2, 6, 2};
  c.model.num_heads = {3, 6, 12, 24};
  c.model.head_variant = HeadVariant::mlp2;
  c.output_dir = "out dir";
  c.train_list = "lists/train_val_list.txt";
  const RunConfig back = parse_config(serialize_config(c));
  CHECK(back == c);
  CHECK(serialize_config(back) == serialize_config(c));
  CHECK(parse_config(serialize_config(RunConfig{})) == RunConfig{});
}

TEST_CASE("config parsing reports the offending line") {
  CHECK_THROWS_WITH_AS(parse_config("[train]\nlr = 1e-3\nbogus = 4\n", "x.cfg"), doctest::Contains("x.cfg:3"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("[train]\nlr = fast\n", "x.cfg"), doctest::Contains("lr"), ConfigError);
  CHECK_THROWS_AS(parse_config("lr = 1\n"), ConfigError);
  const RunConfig c = parse_config("# comment\n[train]\nlr = 0.002 ; trailing\n[model]\ndepths = 2, 2\n");
  CHECK(c.lr == 0.002);
  CHECK(c.model.depths == std::vector<std::size_t>{2, 2});
}

TEST_CASE("overrides and lookups use section.key") {
  RunConfig c;
  apply_override(c, "train.epochs", "3");
  apply_override(c, "model.head_variant", "headless");
  CHECK(c.epochs == 3);
  CHECK(get_config_value(c, "model.head_variant") == "headless");
  CHECK_THROWS_AS(apply_override(c, "train.nope", "1"), ConfigError);
  for (const auto& key : config_keys()) CHECK_NOTHROW(get_config_value(c, key));
  CHECK(c.manifest_path() == (fs::path("run") / "split.txt").string());
}

TEST_CASE("validation rejects bad values") {
  RunConfig c;
  CHECK_NOTHROW(validate_config(c, false));
  c.train_frac = 1.0;
  CHECK_THROWS_AS(validate_config(c, false), ConfigError);
  c = RunConfig{};
  c.lr = 0.0;
  CHECK_THROWS_AS(validate_config(c, false), ConfigError);
  c = RunConfig{};
  c.model.window = 3;
  CHECK_THROWS_AS(validate_config(c, false), ConfigError);
  c = RunConfig{};
  c.labels_csv = "/nonexistent/labels.csv";
  CHECK_THROWS_AS(validate_config(c, true), ConfigError);
}

TEST_CASE("split is byte-identical across runs") {
  const auto dir = oracle::scratch_dir("split");
  RunConfig c = glyph_run(dir, 40, 1);
  cmd_split(c);
  const std::string first = oracle::read_file(c.manifest_path());
  cmd_split(c);
  CHECK(oracle::read_file(c.manifest_path()) == first);
  CHECK_FALSE(first.empty());
}

TEST_CASE("training zero epochs is an error") {
  const auto dir = oracle::scratch_dir("zero");
  RunConfig c = glyph_run(dir, 16, 0);
  CHECK_THROWS_WITH_AS(cmd_train(c), doctest::Contains("nothing to train"), ConfigError);
}

TEST_CASE("train, evaluate and explain an overfit glyph model" * doctest::timeout(900)) {
  const auto dir = oracle::scratch_dir("pipeline");
  RunConfig c = glyph_run(dir, 64, 40);
  c.train_frac = 0.75;
  const TrainResult r = cmd_train(c);
  REQUIRE(r.history.size() == 40);
  CHECK(r.best_epoch >= 1);

  const fs::path run = c.output_dir;
  CHECK(fs::exists(run / "metrics.csv"));
  CHECK(fs::exists(run / "checkpoints" / "epoch_0040.swcx"));
  CHECK(fs::exists(run / "checkpoints" / "epoch_0040.cfg"));
  const auto best = read_key_values(run / "best.txt");
  CHECK(best.at("epoch") == std::to_string(r.best_epoch));
  CHECK(fs::path(best_checkpoint(c)) == fs::path(r.best_checkpoint));

  // The last checkpoint has memorized the training split.
  const std::string last = (run / "checkpoints" / "epoch_0040.swcx").string();
  const std::string csv = cmd_eval(c, {last}, "train", (run / "report_train.csv").string());
  std::istringstream in(csv);
  std::string line, mean_line;
  while (std::getline(in, line))
    if (line.rfind("Mean,", 0) == 0) mean_line = line;
  REQUIRE_FALSE(mean_line.empty());
  CHECK(std::stod(mean_line.substr(5)) >= 0.95);
  CHECK(oracle::read_file(run / "report_train.csv") == csv);

  const fs::path image = dir / "data" / "images" / "00000001_000.png";
  const fs::path png = run / "cam" / "cam.png";
  const Heatmap h = cmd_gradcam(c, "", image.string(), std::string("Mass"), png.string());
  CHECK(fs::exists(png));
  CHECK(h.target_class == *class_index("Mass"));
  CHECK_FALSE(h.dominant);
  CHECK_THROWS_AS(cmd_gradcam(c, "", image.string(), std::string("Nope"), png.string()), ConfigError);
}

}  // TEST_SUITE
