#pragma once

#include "cxr/label.hpp"

#include "json.hpp"

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cxr {

/// A ratio that may be UNDEFINED (zero denominator). UNDEFINED carries a
/// reason and serializes as {"value": null, "reason": ...}.
struct Metric {
  std::optional<double> value;
  std::string reason;

  static Metric of(double v) { return {v, {}}; }
  static Metric undefined(std::string why) { return {std::nullopt, std::move(why)}; }
  bool defined() const { return value.has_value(); }
  bool operator==(const Metric&) const = default;
};

/// POSITIVE (COVID-19) is the positive class. Counts may be percentages
/// of a corpus (Table-style rows); every ratio is scale-invariant.
struct ConfusionCounts {
  double tp = 0, fp = 0, tn = 0, fn = 0;

  double total() const { return tp + fp + tn + fn; }
  bool integral() const;
  ConfusionCounts& operator+=(const ConfusionCounts& o);
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion(std::span<const Label> predictions, std::span<const Label> truth);

/// Recovers integer counts from percentage entries of a corpus of
/// `corpus_size` images by rounding each entry to the nearest image.
/// Throws Error{Inconsistent} if the rounded counts do not sum to the
/// corpus size.
ConfusionCounts counts_from_percentages(const ConfusionCounts& percentages, std::size_t corpus_size);

struct Interval {
  double lo = 0, hi = 0;
  bool operator==(const Interval&) const = default;
};

/// Wilson score interval for a binomial proportion.
Interval accuracy_ci(std::size_t correct, std::size_t total, double level = 0.95);

struct MetricsReport {
  ConfusionCounts counts;
  Metric accuracy, sensitivity, specificity, precision, npv, f1, fpr;
  Metric auc = Metric::undefined("no scores supplied");
  std::optional<Interval> ci95;  // set only for integral counts
};

/// accuracy = (TP+TN)/total, sensitivity = TP/(TP+FN),
/// specificity = TN/(TN+FP), precision = TP/(TP+FP), npv = TN/(TN+FN),
/// f1 = 2PR/(P+R), fpr = 1 - specificity. Throws on a zero total.
MetricsReport basic_metrics(const ConfusionCounts& c);

struct RocPoint {
  double fpr = 0, tpr = 0;
  bool operator==(const RocPoint&) const = default;
};

/// Points in sweep order (threshold decreasing), starting at (0,0) and
/// ending at (1,1). Consecutive duplicate points are merged.
struct RocCurve {
  std::vector<RocPoint> points;
  std::vector<double> thresholds;
};

/// Sweeps t over a sentinel above the max score, every distinct score
/// (descending), and a sentinel below the min; predicts POSITIVE iff
/// score >= t. Throws if truth holds a single class.
RocCurve roc_curve(std::span<const double> scores, std::span<const Label> truth);

/// Trapezoidal area under the curve.
double auc(const RocCurve& curve);

/// "threshold,fpr,tpr" with a header row.
std::string roc_csv(const RocCurve& curve);

void to_json(nlohmann::json& j, const Metric& m);
void from_json(const nlohmann::json& j, Metric& m);
void to_json(nlohmann::json& j, const ConfusionCounts& c);
void from_json(const nlohmann::json& j, ConfusionCounts& c);
void to_json(nlohmann::json& j, const MetricsReport& r);
void from_json(const nlohmann::json& j, MetricsReport& r);
void to_json(nlohmann::json& j, const RocCurve& c);
void from_json(const nlohmann::json& j, RocCurve& c);

}  // namespace cxr

namespace cxr {

/// Names of the ratio metrics a MetricsReport carries, in report order.
inline constexpr std::string_view kMetricNames[] = {"accuracy", "sensitivity", "specificity", "precision",
                                                    "npv",      "f1",          "fpr",         "auc"};

const Metric& metric_by_name(const MetricsReport& r, std::string_view name);

}  // namespace cxr
