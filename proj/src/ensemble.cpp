#include "cxr/ensemble.hpp"
#include "cxr/error.hpp"
#include "cxr/hashing.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <unordered_map>

namespace cxr {

Label majority_vote(std::span<const Label> member_labels) {
  if (member_labels.empty()) throw Error(ErrorKind::InvalidArgument, "majority_vote: no member labels");
  const auto pos = std::count(member_labels.begin(), member_labels.end(), Label::Positive);
  const auto neg = static_cast<std::ptrdiff_t>(member_labels.size()) - pos;
  return pos >= neg ? Label::Positive : Label::Negative;
}

double fused_score(std::span<const double> member_scores) {
  if (member_scores.empty()) throw Error(ErrorKind::InvalidArgument, "fused_score: no member scores");
  for (double s : member_scores)
    if (!(s >= 0.0 && s <= 1.0)) throw Error(ErrorKind::InvalidArgument, "fused_score: score outside [0,1]");
  // Sorting first makes the sum independent of member order.
  std::vector<double> sorted(member_scores.begin(), member_scores.end());
  std::sort(sorted.begin(), sorted.end());
  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
  return std::clamp(mean, sorted.front(), sorted.back());
}

std::vector<VoteRecord> fuse_predictions(std::span<const std::vector<Prediction>> per_member) {
  if (per_member.empty()) throw Error(ErrorKind::InvalidArgument, "ensemble has no members");
  const auto& first = per_member.front();

  std::vector<std::unordered_map<std::string, const Prediction*>> index(per_member.size());
  for (std::size_t m = 0; m < per_member.size(); ++m) {
    if (per_member[m].size() != first.size())
      throw Error(ErrorKind::Inconsistent, "ensemble member " + std::to_string(m) + " scored " +
                                               std::to_string(per_member[m].size()) + " samples, member 0 scored " +
                                               std::to_string(first.size()));
    for (const auto& p : per_member[m])
      if (!index[m].emplace(p.sample_id, &p).second)
        throw Error(ErrorKind::Inconsistent, "ensemble member " + std::to_string(m) + " repeats sample " + p.sample_id);
  }

  std::vector<VoteRecord> out;
  out.reserve(first.size());
  for (const auto& p0 : first) {
    VoteRecord v;
    v.sample_id = p0.sample_id;
    for (std::size_t m = 0; m < per_member.size(); ++m) {
      auto it = index[m].find(p0.sample_id);
      if (it == index[m].end())
        throw Error(ErrorKind::Inconsistent, "ensemble member " + std::to_string(m) + " has no prediction for " +
                                                 p0.sample_id);
      v.member_labels.push_back(it->second->label);
      v.member_scores.push_back(it->second->score);
    }
    v.fused_label = majority_vote(v.member_labels);
    v.fused_score = fused_score(v.member_scores);
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<VoteRecord> predict_ensemble(const EnsembleModel& model, std::span<const FeatureMatrix> features) {
  if (model.members.empty()) throw Error(ErrorKind::InvalidArgument, "ensemble has no members");
  if (features.size() != model.members.size())
    throw Error(ErrorKind::Inconsistent, "ensemble has " + std::to_string(model.members.size()) + " members but " +
                                             std::to_string(features.size()) + " feature matrices were given");
  std::vector<std::vector<Prediction>> preds;
  preds.reserve(features.size());
  for (std::size_t m = 0; m < features.size(); ++m) {
    try {
      preds.push_back(forward(model.members[m].head, features[m]));
    } catch (Error& e) {
      e.with_context("member " + model.members[m].name);
      throw;
    }
  }
  return fuse_predictions(preds);
}

EnsembleModel load_ensemble(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open ensemble definition " + path.string());
  EnsembleModel model;
  try {
    const auto j = nlohmann::json::parse(in);
    model.tie_rule = j.value("tie_rule", "positive");
    for (const auto& mj : j.at("members")) {
      EnsembleMember m;
      mj.at("name").get_to(m.name);
      mj.at("backbone").get_to(m.backbone);
      m.head_path = mj.at("head").get<std::string>();
      if (m.head_path.is_relative()) m.head_path = path.parent_path() / m.head_path;
      if (m.backbone != "toypool" && std::filesystem::path(m.backbone).is_relative())
        m.backbone = (path.parent_path() / m.backbone).string();
      m.head = load_head(m.head_path);
      model.members.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  if (model.tie_rule != "positive")
    throw Error(ErrorKind::Parse, path.string() + ": unsupported tie_rule \"" + model.tie_rule + "\"");
  if (model.members.empty()) throw Error(ErrorKind::Parse, path.string() + ": ensemble needs at least one member");
  return model;
}

void save_ensemble(const std::filesystem::path& path, const EnsembleModel& model) {
  nlohmann::json j{{"tie_rule", model.tie_rule}, {"members", nlohmann::json::array()}};
  for (const auto& m : model.members)
    j["members"].push_back({{"name", m.name}, {"backbone", m.backbone}, {"head", m.head_path.generic_string()}});
  write_file_atomic(path, j.dump(2) + "\n");
}

void to_json(nlohmann::json& j, const VoteRecord& v) {
  std::vector<std::string_view> labels;
  for (auto l : v.member_labels) labels.push_back(label_name(l));
  j = nlohmann::json{{"sample_id", v.sample_id},
                     {"member_labels", labels},
                     {"member_scores", v.member_scores},
                     {"fused_label", label_name(v.fused_label)},
                     {"fused_score", v.fused_score}};
}

}  // namespace cxr
