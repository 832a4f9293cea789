#include "cxr/config.hpp"
#include "cxr/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace cxr {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Strips a trailing comment that is not inside a string.
std::string_view strip_comment(std::string_view s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

nlohmann::json parse_scalar(std::string_view v, std::size_t line) {
  const auto fail = [&](const std::string& what) {
    return Error(ErrorKind::Parse, "config line " + std::to_string(line) + ": " + what);
  };
  if (v.empty()) throw fail("missing value");
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"') throw fail("unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      if (v[i] == '\\' && i + 2 < v.size()) {
        const char n = v[++i];
        out.push_back(n == 'n' ? '\n' : n == 't' ? '\t' : n);
      } else {
        out.push_back(v[i]);
      }
    }
    return out;
  }
  if (v == "true") return true;
  if (v == "false") return false;
  std::string digits;
  for (char c : v)
    if (c != '_') digits.push_back(c);
  const bool floaty = digits.find_first_of(".eE") != std::string::npos &&
                      digits.find_first_not_of("+-0123456789.eE") == std::string::npos;
  if (!floaty) {
    if (!digits.empty() && digits[0] == '-') {
      std::int64_t i = 0;
      auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), i);
      if (ec == std::errc() && p == digits.data() + digits.size()) return i;
    } else {
      std::uint64_t u = 0;
      const char* start = digits.data() + (!digits.empty() && digits[0] == '+');
      auto [p, ec] = std::from_chars(start, digits.data() + digits.size(), u);
      if (ec == std::errc() && p == digits.data() + digits.size() && start != p) return u;
    }
  } else {
    double d = 0;
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), d);
    if (ec == std::errc() && p == digits.data() + digits.size()) return d;
  }
  throw fail("cannot parse value \"" + std::string(v) + "\"");
}

nlohmann::json parse_value(std::string_view v, std::size_t line) {
  v = trim(v);
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') throw Error(ErrorKind::Parse, "config line " + std::to_string(line) + ": unterminated array");
    auto arr = nlohmann::json::array();
    std::string_view body = trim(v.substr(1, v.size() - 2));
    bool in_str = false;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= body.size(); ++i) {
      if (i < body.size() && body[i] == '"' && (i == 0 || body[i - 1] != '\\')) in_str = !in_str;
      if (i == body.size() || (body[i] == ',' && !in_str)) {
        auto item = trim(body.substr(start, i - start));
        if (!item.empty()) arr.push_back(parse_scalar(item, line));
        start = i + 1;
      }
    }
    return arr;
  }
  return parse_scalar(v, line);
}

template <typename T>
T require(const nlohmann::json& doc, const char* section, const char* key) {
  if (!doc.contains(section) || !doc[section].contains(key))
    throw Error(ErrorKind::Parse, std::string("config: missing required key ") + section + "." + key);
  try {
    return doc[section][key].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::Parse, std::string("config: wrong type for ") + section + "." + key);
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

}  // namespace

nlohmann::json parse_toml_subset(std::string_view text) {
  nlohmann::json doc = nlohmann::json::object();
  nlohmann::json* section = &doc;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw Error(ErrorKind::Parse, "config line " + std::to_string(line_no) + ": bad section header");
      const std::string name(trim(line.substr(1, line.size() - 2)));
      section = &doc[name];
      if (section->is_null()) *section = nlohmann::json::object();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorKind::Parse, "config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw Error(ErrorKind::Parse, "config line " + std::to_string(line_no) + ": empty key");
    if (section->contains(key))
      throw Error(ErrorKind::Parse, "config line " + std::to_string(line_no) + ": duplicate key " + key);
    (*section)[key] = parse_value(line.substr(eq + 1), line_no);
  }
  return doc;
}

void PipelineConfig::finalize() {
  if (backbones.empty()) throw Error(ErrorKind::InvalidArgument, "config: at least one member backbone is required");
  if (member_names.empty()) {
    for (std::size_t i = 0; i < backbones.size(); ++i) {
      std::string stem = backbones[i] == "toypool" ? "toypool" : std::filesystem::path(backbones[i]).stem().string();
      member_names.push_back(stem);
    }
    // Disambiguate repeated backbones: toypool, toypool -> toypool-1, toypool-2.
    for (std::size_t i = 0; i < member_names.size(); ++i) {
      if (std::count(member_names.begin(), member_names.end(), member_names[i]) > 1) {
        const auto base = member_names[i];
        int n = 0;
        for (auto& nm : member_names)
          if (nm == base) nm = base + "-" + std::to_string(++n);
      }
    }
  }
  if (member_names.size() != backbones.size())
    throw Error(ErrorKind::InvalidArgument, "config: members.names must match members.backbones in length");
  for (std::size_t i = 0; i < member_names.size(); ++i)
    for (std::size_t j = i + 1; j < member_names.size(); ++j)
      if (member_names[i] == member_names[j])
        throw Error(ErrorKind::InvalidArgument, "config: duplicate member name " + member_names[i]);
  if (init_seeds.empty())
    for (std::size_t i = 0; i < backbones.size(); ++i) init_seeds.push_back(seeds.init + i);
  if (init_seeds.size() != backbones.size())
    throw Error(ErrorKind::InvalidArgument, "config: members.init_seeds must match members.backbones in length");
  if (folds < 2) throw Error(ErrorKind::InvalidArgument, "config: run.folds must be >= 2");
  if (output_dir.empty()) throw Error(ErrorKind::InvalidArgument, "config: run.output_dir is required");
  if (cache_dir.empty()) cache_dir = output_dir / "cache";
  if (parse_label(positive_class) != Label::Positive)
    throw Error(ErrorKind::InvalidArgument, "config: positive_class must be \"covid\"");
  augment.validate();
  train.validate();
}

PipelineConfig config_from_document(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  PipelineConfig c;
  c.manifest = resolve(base_dir, require<std::string>(doc, "run", "manifest"));
  c.output_dir = resolve(base_dir, require<std::string>(doc, "run", "output_dir"));
  c.folds = require<std::size_t>(doc, "run", "folds");
  c.stratified = require<bool>(doc, "run", "stratified");
  if (doc["run"].contains("cache_dir")) c.cache_dir = resolve(base_dir, doc["run"]["cache_dir"].get<std::string>());
  if (doc["run"].contains("positive_class")) c.positive_class = doc["run"]["positive_class"].get<std::string>();

  for (auto& b : require<std::vector<std::string>>(doc, "members", "backbones"))
    c.backbones.push_back(b == "toypool" ? b : resolve(base_dir, b).string());
  if (doc["members"].contains("names")) c.member_names = doc["members"]["names"].get<std::vector<std::string>>();
  if (doc["members"].contains("init_seeds"))
    c.init_seeds = doc["members"]["init_seeds"].get<std::vector<std::uint64_t>>();

  c.seeds.split = require<std::uint64_t>(doc, "seeds", "split");
  c.seeds.init = require<std::uint64_t>(doc, "seeds", "init");
  c.seeds.train = require<std::uint64_t>(doc, "seeds", "train");
  c.seeds.augment = require<std::uint64_t>(doc, "seeds", "augment");

  c.augment.enabled = require<bool>(doc, "augment", "enabled");
  c.augment.flip_x_prob = require<double>(doc, "augment", "flip_x_prob");
  c.augment.flip_y_prob = require<double>(doc, "augment", "flip_y_prob");
  c.augment.rotation_range_deg = require<double>(doc, "augment", "rotation_range_deg");
  c.augment.shear_range = require<double>(doc, "augment", "shear_range");

  c.train.epochs = require<int>(doc, "train", "epochs");
  c.train.batch_size = require<int>(doc, "train", "batch_size");
  c.train.learning_rate = require<double>(doc, "train", "learning_rate");
  c.train.shuffle = require<bool>(doc, "train", "shuffle");
  c.train.seed = c.seeds.train;

  c.finalize();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return config_from_document(parse_toml_subset(buf.str()), path.parent_path());
  } catch (Error& e) {
    e.with_context(path.string());
    throw;
  }
}

void apply_override(nlohmann::json& doc, const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == dotted_key.size())
    throw Error(ErrorKind::InvalidArgument, "override key must look like section.key, got " + dotted_key);
  auto& slot = doc[dotted_key.substr(0, dot)][dotted_key.substr(dot + 1)];
  const auto v = trim(value);
  const bool structured = !v.empty() && (v.front() == '"' || v.front() == '[');
  try {
    slot = parse_value(value, 0);
  } catch (const Error&) {
    // A bare word that is not a number or boolean is taken as a string.
    if (structured) throw;
    slot = std::string(v);
  }
}

nlohmann::json to_json(const PipelineConfig& c) {
  return nlohmann::json{
      {"manifest", c.manifest.generic_string()},
      {"backbones", c.backbones},
      {"member_names", c.member_names},
      {"init_seeds", c.init_seeds},
      {"folds", c.folds},
      {"stratified", c.stratified},
      {"seeds", {{"split", c.seeds.split}, {"init", c.seeds.init}, {"train", c.seeds.train}, {"augment", c.seeds.augment}}},
      {"augment",
       {{"enabled", c.augment.enabled},
        {"flip_x_prob", c.augment.flip_x_prob},
        {"flip_y_prob", c.augment.flip_y_prob},
        {"rotation_range_deg", c.augment.rotation_range_deg},
        {"shear_range", c.augment.shear_range}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"learning_rate", c.train.learning_rate},
        {"shuffle", c.train.shuffle}}},
      {"positive_class", c.positive_class}};
}

}  // namespace cxr
