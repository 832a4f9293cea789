#include "cxr/metrics.hpp"
#include "cxr/error.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace cxr {

bool ConfusionCounts::integral() const {
  for (double v : {tp, fp, tn, fn})
    if (v != std::floor(v)) return false;
  return true;
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  fp += o.fp;
  tn += o.tn;
  fn += o.fn;
  return *this;
}

ConfusionCounts confusion(std::span<const Label> predictions, std::span<const Label> truth) {
  if (predictions.size() != truth.size())
    throw Error(ErrorKind::InvalidArgument, "confusion: predictions and truth differ in length");
  if (truth.empty()) throw Error(ErrorKind::InvalidArgument, "confusion: empty input");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool pred_pos = predictions[i] == Label::Positive;
    const bool true_pos = truth[i] == Label::Positive;
    if (pred_pos && true_pos) c.tp += 1;
    else if (pred_pos) c.fp += 1;
    else if (true_pos) c.fn += 1;
    else c.tn += 1;
  }
  return c;
}

ConfusionCounts counts_from_percentages(const ConfusionCounts& pct, std::size_t corpus_size) {
  const double n = static_cast<double>(corpus_size);
  ConfusionCounts c{std::round(pct.tp * n / 100.0), std::round(pct.fp * n / 100.0), std::round(pct.tn * n / 100.0),
                    std::round(pct.fn * n / 100.0)};
  if (c.total() != n)
    throw Error(ErrorKind::Inconsistent, "percentages do not round to a " + std::to_string(corpus_size) +
                                             "-image corpus (sum " + std::to_string(c.total()) + ")");
  return c;
}

Interval accuracy_ci(std::size_t correct, std::size_t total, double level) {
  if (total == 0) throw Error(ErrorKind::InvalidArgument, "accuracy_ci: total must be > 0");
  if (correct > total) throw Error(ErrorKind::InvalidArgument, "accuracy_ci: correct exceeds total");
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorKind::InvalidArgument, "accuracy_ci: level must be in (0,1)");
  const double z = boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + level / 2.0);
  const double n = static_cast<double>(total);
  const double p = static_cast<double>(correct) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  Interval ci{std::max(0.0, center - half), std::min(1.0, center + half)};
  // Closed-form endpoints at the boundaries avoid cancellation.
  if (correct == 0) ci.lo = 0.0;
  if (correct == total) ci.hi = 1.0;
  return ci;
}

namespace {
Metric ratio(double num, double den, const char* what) {
  if (den == 0.0) return Metric::undefined(std::string(what) + " has a zero denominator");
  return Metric::of(num / den);
}
}  // namespace

MetricsReport basic_metrics(const ConfusionCounts& c) {
  for (double v : {c.tp, c.fp, c.tn, c.fn})
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "confusion counts must be >= 0");
  if (c.total() <= 0.0) throw Error(ErrorKind::InvalidArgument, "confusion counts total is zero");

  MetricsReport r;
  r.counts = c;
  r.accuracy = ratio(c.tp + c.tn, c.total(), "accuracy");
  r.sensitivity = ratio(c.tp, c.tp + c.fn, "sensitivity (no actual positives)");
  r.specificity = ratio(c.tn, c.tn + c.fp, "specificity (no actual negatives)");
  r.precision = ratio(c.tp, c.tp + c.fp, "precision (no predicted positives)");
  r.npv = ratio(c.tn, c.tn + c.fn, "npv (no predicted negatives)");
  if (!r.precision.defined() || !r.sensitivity.defined()) {
    r.f1 = Metric::undefined("f1 needs both precision and sensitivity");
  } else {
    const double p = *r.precision.value, s = *r.sensitivity.value;
    r.f1 = p + s == 0.0 ? Metric::undefined("f1 has a zero denominator (precision + sensitivity = 0)")
                        : Metric::of(2.0 * p * s / (p + s));
  }
  r.fpr = r.specificity.defined() ? Metric::of(1.0 - *r.specificity.value)
                                  : Metric::undefined("fpr (no actual negatives)");
  if (c.integral()) {
    r.ci95 = accuracy_ci(static_cast<std::size_t>(c.tp + c.tn), static_cast<std::size_t>(c.total()), 0.95);
  }
  return r;
}

RocCurve roc_curve(std::span<const double> scores, std::span<const Label> truth) {
  if (scores.size() != truth.size()) throw Error(ErrorKind::InvalidArgument, "roc: scores and truth differ in length");
  const auto n_pos = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), Label::Positive));
  const auto n_neg = truth.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorKind::InvalidArgument, "roc: truth must contain both classes");
  for (double s : scores)
    if (!std::isfinite(s)) throw Error(ErrorKind::InvalidArgument, "roc: non-finite score");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  auto emit = [&](double t, std::size_t tp, std::size_t fp) {
    const RocPoint p{static_cast<double>(fp) / static_cast<double>(n_neg),
                     static_cast<double>(tp) / static_cast<double>(n_pos)};
    if (!curve.points.empty() && curve.points.back() == p) return;
    curve.points.push_back(p);
    curve.thresholds.push_back(t);
  };

  const double hi = scores[order.front()] + 1.0;
  const double lo = scores[order.back()] - 1.0;
  emit(hi, 0, 0);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    while (i < order.size() && scores[order[i]] == t) {
      (truth[order[i]] == Label::Positive ? tp : fp)++;
      ++i;
    }
    emit(t, tp, fp);
  }
  emit(lo, tp, fp);
  return curve;
}

double auc(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return area;
}

std::string roc_csv(const RocCurve& curve) {
  std::ostringstream os;
  os.precision(17);
  os << "threshold,fpr,tpr\n";
  for (std::size_t i = 0; i < curve.points.size(); ++i)
    os << curve.thresholds[i] << ',' << curve.points[i].fpr << ',' << curve.points[i].tpr << '\n';
  return os.str();
}

void to_json(nlohmann::json& j, const Metric& m) {
  if (m.defined()) j = nlohmann::json{{"value", *m.value}};
  else j = nlohmann::json{{"value", nullptr}, {"reason", m.reason}};
}

void from_json(const nlohmann::json& j, Metric& m) {
  if (j.at("value").is_null()) m = Metric::undefined(j.value("reason", "undefined"));
  else m = Metric::of(j.at("value").get<double>());
}

void to_json(nlohmann::json& j, const ConfusionCounts& c) {
  j = nlohmann::json{{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}

void from_json(const nlohmann::json& j, ConfusionCounts& c) {
  j.at("tp").get_to(c.tp);
  j.at("fp").get_to(c.fp);
  j.at("tn").get_to(c.tn);
  j.at("fn").get_to(c.fn);
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = nlohmann::json{{"counts", r.counts},         {"accuracy", r.accuracy}, {"sensitivity", r.sensitivity},
                     {"specificity", r.specificity}, {"precision", r.precision}, {"npv", r.npv},
                     {"f1", r.f1},                 {"fpr", r.fpr},           {"auc", r.auc}};
  j["ci95"] = r.ci95 ? nlohmann::json{{"lo", r.ci95->lo}, {"hi", r.ci95->hi}, {"method", "wilson"}}
                     : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, MetricsReport& r) {
  j.at("counts").get_to(r.counts);
  j.at("accuracy").get_to(r.accuracy);
  j.at("sensitivity").get_to(r.sensitivity);
  j.at("specificity").get_to(r.specificity);
  j.at("precision").get_to(r.precision);
  j.at("npv").get_to(r.npv);
  j.at("f1").get_to(r.f1);
  j.at("fpr").get_to(r.fpr);
  j.at("auc").get_to(r.auc);
  r.ci95.reset();
  if (j.contains("ci95") && !j["ci95"].is_null()) r.ci95 = Interval{j["ci95"].at("lo"), j["ci95"].at("hi")};
}

void to_json(nlohmann::json& j, const RocCurve& c) {
  auto pts = nlohmann::json::array();
  for (const auto& p : c.points) pts.push_back({p.fpr, p.tpr});
  j = nlohmann::json{{"points", pts}, {"thresholds", c.thresholds}};
}

void from_json(const nlohmann::json& j, RocCurve& c) {
  c.points.clear();
  for (const auto& p : j.at("points")) c.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  j.at("thresholds").get_to(c.thresholds);
  if (c.points.size() != c.thresholds.size()) throw Error(ErrorKind::Parse, "roc: points/thresholds length mismatch");
}

}  // namespace cxr

namespace cxr {

const Metric& metric_by_name(const MetricsReport& r, std::string_view name) {
  if (name == "accuracy") return r.accuracy;
  if (name == "sensitivity") return r.sensitivity;
  if (name == "specificity") return r.specificity;
  if (name == "precision") return r.precision;
  if (name == "npv") return r.npv;
  if (name == "f1") return r.f1;
  if (name == "fpr") return r.fpr;
  if (name == "auc") return r.auc;
  throw Error(ErrorKind::InvalidArgument, "unknown metric " + std::string(name));
}

}  // namespace cxr
