#include "cxr/manifest.hpp"
#include "cxr/error.hpp"
#include "cxr/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace cxr {

namespace {

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool row_has_content = false;
  std::size_t line = 1;

  auto end_row = [&] {
    if (row_has_content || !row.empty() || !field.empty()) {
      row.push_back(std::move(field));
      rows.push_back(std::move(row));
    }
    row.clear();
    field.clear();
    row_has_content = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        row_has_content = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        row_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        ++line;
        break;
      default:
        field.push_back(c);
        row_has_content = true;
    }
  }
  if (quoted) throw Error(ErrorKind::Parse, "unterminated quoted field near line " + std::to_string(line));
  end_row();
  return rows;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

}  // namespace

Manifest::Manifest(std::vector<SampleRecord> samples, std::filesystem::path base_dir)
    : samples_(std::move(samples)), base_dir_(std::move(base_dir)) {
  std::unordered_set<std::string> seen;
  for (const auto& s : samples_) {
    if (s.id.empty()) throw Error(ErrorKind::Parse, "empty sample id");
    if (s.image_path.empty()) throw Error(ErrorKind::Parse, "empty image_path for sample " + s.id);
    if (!seen.insert(s.id).second) throw Error(ErrorKind::DuplicateId, "duplicate sample id \"" + s.id + "\"");
    (s.label == Label::Positive ? counts_.positive : counts_.negative)++;
  }
}

std::filesystem::path Manifest::resolve(const SampleRecord& s) const {
  if (s.image_path.is_absolute() || base_dir_.empty()) return s.image_path;
  return base_dir_ / s.image_path;
}

std::vector<Label> Manifest::labels() const {
  std::vector<Label> out;
  out.reserve(samples_.size());
  for (const auto& s : samples_) out.push_back(s.label);
  return out;
}

std::size_t Manifest::find(const std::string& id) const {
  for (std::size_t i = 0; i < samples_.size(); ++i)
    if (samples_[i].id == id) return i;
  return npos;
}

Manifest parse_manifest(std::string_view csv_text, std::filesystem::path base_dir) {
  if (csv_text.size() >= 3 && static_cast<unsigned char>(csv_text[0]) == 0xEF &&
      static_cast<unsigned char>(csv_text[1]) == 0xBB && static_cast<unsigned char>(csv_text[2]) == 0xBF)
    csv_text.remove_prefix(3);

  auto rows = parse_csv(csv_text);
  if (rows.empty()) throw Error(ErrorKind::Parse, "manifest is empty (missing header)");
  const auto& header = rows.front();
  const bool has_note = header.size() == 4 && header[3] == "source_note";
  if (header.size() < 3 || header[0] != "id" || header[1] != "image_path" || header[2] != "label" ||
      (header.size() == 4 && !has_note) || header.size() > 4) {
    throw Error(ErrorKind::Parse, "manifest header must be id,image_path,label,source_note");
  }

  std::vector<SampleRecord> samples;
  samples.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = "manifest row " + std::to_string(r + 1);
    if (row.size() != header.size())
      throw Error(ErrorKind::Parse, where + ": expected " + std::to_string(header.size()) + " fields, got " +
                                        std::to_string(row.size()));
    SampleRecord s;
    s.id = row[0];
    s.image_path = row[1];
    auto label = parse_label(row[2]);
    if (!label) throw Error(ErrorKind::UnknownLabel, where + ": unknown label \"" + row[2] + "\"");
    s.label = *label;
    if (has_note) s.source_note = row[3];
    if (s.id.empty()) throw Error(ErrorKind::Parse, where + ": empty id");
    if (s.image_path.empty()) throw Error(ErrorKind::Parse, where + ": empty image_path");
    samples.push_back(std::move(s));
  }
  return Manifest(std::move(samples), std::move(base_dir));
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open manifest " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_manifest(buf.str(), path.parent_path());
  } catch (Error& e) {
    e.with_context(path.string());
    throw;
  }
}

std::string format_manifest(const Manifest& m) {
  std::string out = "id,image_path,label,source_note\n";
  for (const auto& s : m.samples()) {
    out += csv_escape(s.id) + ',' + csv_escape(s.image_path.generic_string()) + ',' +
           std::string(label_name(s.label)) + ',' + csv_escape(s.source_note) + '\n';
  }
  return out;
}

std::vector<std::size_t> FoldPlan::train_indices(std::size_t fold) const {
  const auto& test = folds.at(fold);
  std::vector<std::size_t> train;
  train.reserve(n - test.size());
  std::size_t t = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (t < test.size() && test[t] == i) {
      ++t;
      continue;
    }
    train.push_back(i);
  }
  return train;
}

FoldPlan plan_folds(const Manifest& manifest, std::size_t k, std::uint64_t seed, bool stratified) {
  if (k < 2) throw Error(ErrorKind::InvalidArgument, "fold count k must be >= 2, got " + std::to_string(k));
  const auto& counts = manifest.class_counts();
  if (counts.positive == 0 || counts.negative == 0)
    throw Error(ErrorKind::InvalidArgument, "fold planning needs at least one sample of each class");
  if (stratified && (counts.positive < k || counts.negative < k))
    throw Error(ErrorKind::InvalidArgument,
                "stratified " + std::to_string(k) + "-fold split needs >= k samples per class (have " +
                    std::to_string(counts.positive) + " covid, " + std::to_string(counts.negative) + " normal)");
  if (manifest.size() < k)
    throw Error(ErrorKind::InvalidArgument, "fewer samples than folds");

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.stratified = stratified;
  plan.n = manifest.size();
  plan.folds.assign(k, {});

  SplitMix64 rng(seed);
  std::vector<std::vector<std::size_t>> groups;
  if (stratified) {
    groups.resize(2);
    for (std::size_t i = 0; i < manifest.size(); ++i)
      groups[class_index(manifest.samples()[i].label)].push_back(i);
  } else {
    groups.resize(1);
    for (std::size_t i = 0; i < manifest.size(); ++i) groups[0].push_back(i);
  }

  std::size_t next_fold = 0;
  for (auto& g : groups) {
    fisher_yates(std::span(g), rng);
    for (auto idx : g) {
      plan.folds[next_fold].push_back(idx);
      next_fold = (next_fold + 1) % k;
    }
  }
  for (auto& f : plan.folds) std::sort(f.begin(), f.end());
  return plan;
}

void to_json(nlohmann::json& j, const FoldPlan& plan) {
  j = nlohmann::json{{"k", plan.k},
                     {"seed", plan.seed},
                     {"stratified", plan.stratified},
                     {"n", plan.n},
                     {"folds", plan.folds}};
}

void from_json(const nlohmann::json& j, FoldPlan& plan) {
  j.at("k").get_to(plan.k);
  j.at("seed").get_to(plan.seed);
  j.at("stratified").get_to(plan.stratified);
  j.at("n").get_to(plan.n);
  j.at("folds").get_to(plan.folds);
  if (plan.folds.size() != plan.k) throw Error(ErrorKind::Parse, "fold plan: folds.size() != k");
}

}  // namespace cxr
