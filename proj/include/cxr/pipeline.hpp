#pragma once

#include "cxr/config.hpp"
#include "cxr/ensemble.hpp"
#include "cxr/metrics.hpp"

#include "json.hpp"

#include <map>
#include <string>
#include <vector>

namespace cxr {

struct FoldResult {
  std::size_t fold = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::vector<MetricsReport> members;  // aligned with RunSummary::member_names
  std::vector<double> member_final_loss;
  MetricsReport ensemble;
};

struct ModelSummary {
  std::string name;
  bool is_ensemble = false;
  MetricsReport pooled;                    // from confusion counts summed over folds
  RocCurve pooled_roc;                     // over all out-of-fold scores
  std::map<std::string, Metric> fold_mean; // arithmetic mean of per-fold values
};

struct RunSummary {
  std::size_t k = 0;
  std::size_t corpus_size = 0;
  std::vector<std::string> member_names;
  std::vector<FoldResult> folds;
  std::vector<ModelSummary> models;  // members in order, then the ensemble
  nlohmann::json provenance;
  std::vector<std::string> notes;
  std::string generated_at;  // the only non-deterministic field
  bool complete = false;
};

/// Label/score metrics for one model on one set of samples.
MetricsReport evaluate_scores(std::span<const Label> predicted, std::span<const double> scores,
                              std::span<const Label> truth);

/// Mean of each metric over folds; UNDEFINED if any fold is UNDEFINED.
std::map<std::string, Metric> mean_over_folds(const std::vector<const MetricsReport*>& per_fold);

/// Plans folds, then per fold: featurizes the (augmented) training split
/// and the untouched test split, trains one head per member from scratch,
/// scores the test split, and fuses members by majority vote. Writes the
/// fold plan, heads, out-of-fold predictions and the report into
/// cfg.output_dir. A RUN_INCOMPLETE marker stays behind if a stage fails.
RunSummary run_pipeline(const PipelineConfig& cfg);

void to_json(nlohmann::json& j, const RunSummary& s);
void from_json(const nlohmann::json& j, RunSummary& s);

}  // namespace cxr
