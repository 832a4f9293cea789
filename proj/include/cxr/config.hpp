#pragma once

#include "cxr/head.hpp"
#include "cxr/imageproc.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cxr {

/// Parses the TOML subset used by pipeline configs: `[section]` headers,
/// `key = value` lines, `#` comments, and values that are quoted strings,
/// integers, floats, booleans, or single-line arrays of those. Sections
/// become nested objects.
nlohmann::json parse_toml_subset(std::string_view text);

struct Seeds {
  std::uint64_t split = 0;
  std::uint64_t init = 0;
  std::uint64_t train = 0;
  std::uint64_t augment = 0;
  bool operator==(const Seeds&) const = default;
};

struct PipelineConfig {
  std::filesystem::path manifest;
  std::vector<std::string> backbones;      // "toypool" or metadata paths, one per member
  std::vector<std::string> member_names;   // defaults to backbone names
  std::vector<std::uint64_t> init_seeds;   // defaults to seeds.init + member index
  std::size_t folds = 5;
  bool stratified = true;
  Seeds seeds;
  AugmentConfig augment;
  TrainConfig train;  // train.seed is replaced per fold/member from seeds.train
  std::filesystem::path output_dir;
  std::filesystem::path cache_dir;  // defaults to output_dir / "cache"
  std::string positive_class = "covid";

  /// Fills defaults for names/init seeds/cache dir and checks invariants.
  void finalize();
};

/// Builds a config from the parsed document. Every key that affects
/// results must be present: run.manifest, run.output_dir, run.folds,
/// run.stratified, members.backbones, all four seeds, all augment keys,
/// and train.epochs/batch_size/learning_rate/shuffle. Relative paths are
/// resolved against `base_dir`.
PipelineConfig config_from_document(const nlohmann::json& doc, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);

/// Sets `section.key` from a command-line override string, typed like
/// the TOML value parser would type it. An unquoted value that is not a
/// number, boolean or array is taken as a string.
void apply_override(nlohmann::json& doc, const std::string& dotted_key, const std::string& value);

nlohmann::json to_json(const PipelineConfig& cfg);

}  // namespace cxr
