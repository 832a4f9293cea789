#pragma once

#include "cxr/head.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cxr {

struct EnsembleMember {
  std::string name;      // display name, e.g. "resnet18"
  std::string backbone;  // "toypool" or a metadata path
  std::filesystem::path head_path;
  SoftmaxHead head;
};

/// Majority-vote ensemble. Votes are unweighted; an exact tie goes to
/// POSITIVE (the only accepted tie_rule).
struct EnsembleModel {
  std::vector<EnsembleMember> members;
  std::string tie_rule = "positive";
};

struct VoteRecord {
  std::string sample_id;
  std::vector<Label> member_labels;
  std::vector<double> member_scores;
  Label fused_label = Label::Positive;
  double fused_score = 0.0;
};

/// Modal label; POSITIVE on an exact tie. Throws on an empty list.
Label majority_vote(std::span<const Label> member_labels);

/// Arithmetic mean of member POSITIVE probabilities. Throws on an empty
/// list or a value outside [0,1].
double fused_score(std::span<const double> member_scores);

/// Fuses per-member predictions joined by sample id. The output follows
/// the first member's sample order; every member must cover exactly the
/// same id set.
std::vector<VoteRecord> fuse_predictions(std::span<const std::vector<Prediction>> per_member);

/// Runs each member head on its own features, then fuses.
std::vector<VoteRecord> predict_ensemble(const EnsembleModel& model, std::span<const FeatureMatrix> features);

/// Definition file: {"members":[{"name","backbone","head"}], "tie_rule":"positive"}.
/// Relative paths resolve against the file's directory; heads are loaded.
EnsembleModel load_ensemble(const std::filesystem::path& path);
void save_ensemble(const std::filesystem::path& path, const EnsembleModel& model);

void to_json(nlohmann::json& j, const VoteRecord& v);

}  // namespace cxr
