#pragma once

#include "cxr/label.hpp"

#include "json.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cxr {

struct SampleRecord {
  std::string id;
  std::filesystem::path image_path;
  Label label = Label::Positive;
  std::string source_note;
};

struct ClassCounts {
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t total() const { return positive + negative; }
  bool operator==(const ClassCounts&) const = default;
};

/// Ordered, labeled image corpus. Relative image paths resolve against
/// `base_dir` (the directory holding the manifest file).
class Manifest {
 public:
  Manifest() = default;
  explicit Manifest(std::vector<SampleRecord> samples, std::filesystem::path base_dir = {});

  const std::vector<SampleRecord>& samples() const { return samples_; }
  const ClassCounts& class_counts() const { return counts_; }
  const std::filesystem::path& base_dir() const { return base_dir_; }
  std::size_t size() const { return samples_.size(); }

  std::filesystem::path resolve(const SampleRecord& s) const;
  std::vector<Label> labels() const;

  /// Index of a sample id, or npos.
  std::size_t find(const std::string& id) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::vector<SampleRecord> samples_;
  ClassCounts counts_;
  std::filesystem::path base_dir_;
};

/// Reads `id,image_path,label,source_note` CSV (RFC 4180 quoting).
/// Throws Error{Io|Parse|DuplicateId|UnknownLabel}.
Manifest load_manifest(const std::filesystem::path& path);
Manifest parse_manifest(std::string_view csv_text, std::filesystem::path base_dir = {});
std::string format_manifest(const Manifest& m);

/// k disjoint test folds; fold i trains on the complement of folds[i].
struct FoldPlan {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  bool stratified = true;
  std::size_t n = 0;
  std::vector<std::vector<std::size_t>> folds;  // each sorted ascending

  const std::vector<std::size_t>& test_indices(std::size_t fold) const { return folds.at(fold); }
  std::vector<std::size_t> train_indices(std::size_t fold) const;
};

/// Shuffles each class (or the whole corpus when unstratified) with a
/// seeded Fisher-Yates pass and deals indices round-robin across folds.
/// When stratified, POSITIVE indices are dealt first and NEGATIVE ones
/// continue from the fold where the positives stopped, so fold sizes
/// differ by at most one both per class and overall.
FoldPlan plan_folds(const Manifest& manifest, std::size_t k, std::uint64_t seed, bool stratified = true);

void to_json(nlohmann::json& j, const FoldPlan& plan);
void from_json(const nlohmann::json& j, FoldPlan& plan);

}  // namespace cxr
