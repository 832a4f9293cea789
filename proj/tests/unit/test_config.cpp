#include "doctest.h"

#include "cxr/config.hpp"
#include "cxr/error.hpp"

#include <filesystem>
#include <fstream>

using namespace cxr;
namespace fs = std::filesystem;

namespace {

const char* kComplete = R"(# comment line
[run]
manifest = "data/manifest.csv"   # trailing comment
output_dir = "out"
folds = 5
stratified = true

[members]
backbones = ["toypool", "models/r18.json"]

[seeds]
split = 1
init = 10
train = 3
augment = 4

[augment]
enabled = true
flip_x_prob = 0.5
flip_y_prob = 0.25
rotation_range_deg = 10
shear_range = 0.3

[train]
epochs = 15
batch_size = 8
learning_rate = 5e-5
shuffle = false
)";

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected cxr::Error");
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST_CASE("toml subset values") {
  const auto doc = parse_toml_subset(R"(
top = 1
[a]
s = "x # not a comment"
esc = "q\"q"
i = -3
u = 18446744073709551615
f = 1.5e2
b = false
arr = [1, 2, 3]
strs = ["a,b", "c"]
empty = []
)");
  CHECK(doc["top"] == 1);
  CHECK(doc["a"]["s"] == "x # not a comment");
  CHECK(doc["a"]["esc"] == "q\"q");
  CHECK(doc["a"]["i"] == -3);
  CHECK(doc["a"]["u"].get<std::uint64_t>() == 18446744073709551615ull);
  CHECK(doc["a"]["f"] == 150.0);
  CHECK(doc["a"]["b"] == false);
  CHECK(doc["a"]["arr"] == nlohmann::json::array({1, 2, 3}));
  CHECK(doc["a"]["strs"] == nlohmann::json::array({"a,b", "c"}));
  CHECK(doc["a"]["empty"].empty());
}

TEST_CASE("toml subset errors") {
  CHECK(kind_of([] { parse_toml_subset("[a]\nx = 1\nx = 2\n"); }) == ErrorKind::Parse);
  CHECK(kind_of([] { parse_toml_subset("x = \"open\n"); }) == ErrorKind::Parse);
  CHECK(kind_of([] { parse_toml_subset("x = [1, 2\n"); }) == ErrorKind::Parse);
  CHECK(kind_of([] { parse_toml_subset("just words\n"); }) == ErrorKind::Parse);
  CHECK(kind_of([] { parse_toml_subset("x = what\n"); }) == ErrorKind::Parse);
  CHECK(kind_of([] { parse_toml_subset("[broken\n"); }) == ErrorKind::Parse);
}

TEST_CASE("complete config") {
  const auto cfg = config_from_document(parse_toml_subset(kComplete), "/base");
  CHECK(cfg.manifest == fs::path("/base/data/manifest.csv"));
  CHECK(cfg.output_dir == fs::path("/base/out"));
  CHECK(cfg.cache_dir == fs::path("/base/out/cache"));
  CHECK(cfg.backbones == std::vector<std::string>{"toypool", "/base/models/r18.json"});
  CHECK(cfg.member_names == std::vector<std::string>{"toypool", "r18"});
  CHECK(cfg.init_seeds == std::vector<std::uint64_t>{10, 11});
  CHECK(cfg.folds == 5);
  CHECK(cfg.seeds == Seeds{1, 10, 3, 4});
  CHECK(cfg.augment.flip_y_prob == 0.25);
  CHECK(cfg.augment.rotation_range_deg == 10.0);
  CHECK(cfg.train.learning_rate == 5e-5);
  CHECK_FALSE(cfg.train.shuffle);
  CHECK(cfg.positive_class == "covid");
}

TEST_CASE("every result-affecting key is required") {
  const auto full = parse_toml_subset(kComplete);
  for (const auto& [section, keys] : full.items())
    for (const auto& [key, _] : keys.items()) {
      auto doc = full;
      doc[section].erase(key);
      CAPTURE(section);
      CAPTURE(key);
      CHECK(kind_of([&] { config_from_document(doc, "/base"); }) == ErrorKind::Parse);
    }
}

TEST_CASE("invalid values") {
  auto doc = parse_toml_subset(kComplete);
  doc["run"]["folds"] = 1;
  CHECK_THROWS_AS(config_from_document(doc, "."), Error);
  doc = parse_toml_subset(kComplete);
  doc["augment"]["flip_x_prob"] = 1.5;
  CHECK_THROWS_AS(config_from_document(doc, "."), Error);
  doc = parse_toml_subset(kComplete);
  doc["train"]["epochs"] = 0;
  CHECK_THROWS_AS(config_from_document(doc, "."), Error);
  doc = parse_toml_subset(kComplete);
  doc["members"]["names"] = {"only-one"};
  CHECK_THROWS_AS(config_from_document(doc, "."), Error);
  doc = parse_toml_subset(kComplete);
  doc["members"]["names"] = {"same", "same"};
  CHECK_THROWS_AS(config_from_document(doc, "."), Error);
  doc = parse_toml_subset(kComplete);
  doc["run"]["positive_class"] = "normal";
  CHECK_THROWS_AS(config_from_document(doc, "."), Error);
  doc = parse_toml_subset(kComplete);
  doc["seeds"]["split"] = "seven";
  CHECK(kind_of([&] { config_from_document(doc, "."); }) == ErrorKind::Parse);
}

TEST_CASE("overrides are typed like file values") {
  auto doc = parse_toml_subset(kComplete);
  apply_override(doc, "train.learning_rate", "0.05");
  apply_override(doc, "run.folds", "3");
  apply_override(doc, "augment.enabled", "false");
  apply_override(doc, "run.manifest", "other.csv");
  apply_override(doc, "members.backbones", "[\"toypool\"]");
  const auto cfg = config_from_document(doc, "/b");
  CHECK(cfg.train.learning_rate == 0.05);
  CHECK(cfg.folds == 3);
  CHECK_FALSE(cfg.augment.enabled);
  CHECK(cfg.manifest == fs::path("/b/other.csv"));
  CHECK(cfg.backbones.size() == 1);
  CHECK_THROWS_AS(apply_override(doc, "nodot", "1"), Error);
}

TEST_CASE("load from file resolves paths against the file") {
  const auto dir = fs::temp_directory_path() / "cxr_test_config";
  fs::create_directories(dir);
  std::ofstream(dir / "c.toml") << kComplete;
  const auto cfg = load_config(dir / "c.toml");
  CHECK(cfg.manifest == dir / "data/manifest.csv");
  CHECK(kind_of([&] { load_config(dir / "missing.toml"); }) == ErrorKind::Io);
  const auto j = to_json(cfg);
  CHECK(j.contains("seeds"));
  CHECK_FALSE(j.contains("output_dir"));
}

TEST_CASE("shipped configs parse") {
  for (const char* name : {"synthetic.toml", "clinical.toml"}) {
    CAPTURE(name);
    const auto cfg = load_config(fs::path(CXR_FIXTURES) / ".." / ".." / "configs" / name);
    CHECK(cfg.backbones.size() == 3);
    CHECK(cfg.folds == 5);
  }
}
