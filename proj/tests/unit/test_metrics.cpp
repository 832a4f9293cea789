#include "doctest.h"

#include "cxr/error.hpp"
#include "cxr/metrics.hpp"
#include "cxr/rng.hpp"
#include "oracles.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <set>

using namespace cxr;

namespace {

constexpr Label P = Label::Positive;
constexpr Label N = Label::Negative;

std::vector<Label> random_labels(SplitMix64& rng, std::size_t n, double p_pos = 0.5) {
  std::vector<Label> out(n);
  for (auto& l : out) l = rng.bernoulli(p_pos) ? P : N;
  return out;
}

double v(const Metric& m) {
  REQUIRE(m.defined());
  return *m.value;
}

struct TableRow {
  const char* name;
  ConfusionCounts pct;
  double accuracy_pct;
};

const TableRow kTable[] = {
    {"ResNet18", {90.2, 0.3, 8.4, 1.0}, 98.6},
    {"ResNet50", {90.9, 0.7, 8.0, 0.3}, 99.0},
    {"DenseNet201", {89.9, 0.7, 8.0, 1.5}, 97.9},
    {"Ensemble", {91.3, 0.3, 8.4, 0.0}, 99.7},
};

}  // namespace

TEST_CASE("confusion examples") {
  const std::vector<Label> a{P, N};
  CHECK(confusion(a, a) == ConfusionCounts{1, 0, 1, 0});
  const std::vector<Label> pred{P, P, P}, truth{P, N, N};
  CHECK(confusion(pred, truth) == ConfusionCounts{1, 2, 0, 0});
  const std::vector<Label> short_truth{P};
  CHECK_THROWS_AS(confusion(pred, short_truth), Error);
}

TEST_CASE("confusion matches tally oracle") {
  SplitMix64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pred = random_labels(rng, 100), truth = random_labels(rng, 100, 0.7);
    const auto c = confusion(pred, truth);
    const auto t = oracle::tally(pred, truth);
    CHECK(c == ConfusionCounts{double(t[0]), double(t[1]), double(t[2]), double(t[3])});
    CHECK(c.integral());
  }
}

TEST_CASE("basic metrics on a percentage row") {
  const auto r = basic_metrics({90.2, 0.3, 8.4, 1.0});
  CHECK(v(r.precision) == doctest::Approx(90.2 / 90.5).epsilon(1e-12));
  CHECK(v(r.precision) > 0.996);
  CHECK(v(r.sensitivity) == doctest::Approx(90.2 / 91.2).epsilon(1e-12));
  CHECK(v(r.specificity) == doctest::Approx(8.4 / 8.7).epsilon(1e-12));
  CHECK(v(r.npv) == doctest::Approx(8.4 / 9.4).epsilon(1e-12));
  CHECK_FALSE(r.ci95.has_value());

  const auto e = basic_metrics({91.3, 0.3, 8.4, 0.0});
  CHECK(v(e.sensitivity) == 1.0);
}

TEST_CASE("table rows reproduce printed accuracy from image counts") {
  for (const auto& row : kTable) {
    CAPTURE(row.name);
    const auto counts = counts_from_percentages(row.pct, 286);
    CHECK(counts.total() == 286);
    CHECK(counts.integral());
    const double acc = 100.0 * v(basic_metrics(counts).accuracy);
    CHECK(std::abs(acc - row.accuracy_pct) <= 0.05 + 1e-9);
  }
  const auto r18 = counts_from_percentages(kTable[0].pct, 286);
  CHECK(r18 == ConfusionCounts{258, 1, 24, 3});
  const auto ens = counts_from_percentages(kTable[3].pct, 286);
  CHECK(ens == ConfusionCounts{261, 1, 24, 0});
  CHECK(v(basic_metrics(ens).sensitivity) == 1.0);
  CHECK_THROWS_AS(counts_from_percentages({50, 50, 50, 50}, 286), Error);
}

TEST_CASE("zero denominators are undefined, not zero") {
  const auto r = basic_metrics({0, 0, 5, 0});
  CHECK_FALSE(r.sensitivity.defined());
  CHECK_FALSE(r.sensitivity.reason.empty());
  CHECK_FALSE(r.precision.defined());
  CHECK_FALSE(r.f1.defined());
  CHECK(v(r.specificity) == 1.0);
  CHECK(v(r.fpr) == 0.0);
  CHECK(v(r.accuracy) == 1.0);
  CHECK_THROWS_AS(basic_metrics({0, 0, 0, 0}), Error);
  const nlohmann::json j = r.sensitivity;
  CHECK(j["value"].is_null());
}

TEST_CASE("ratio invariants over random counts") {
  SplitMix64 rng(8);
  for (int i = 0; i < 1000; ++i) {
    ConfusionCounts c{double(1 + rng.below(300)), double(1 + rng.below(300)), double(1 + rng.below(300)),
                      double(1 + rng.below(300))};
    const auto r = basic_metrics(c);
    for (auto name : kMetricNames) {
      if (name == "auc") continue;
      const double x = v(metric_by_name(r, name));
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
    const double p = v(r.precision), s = v(r.sensitivity);
    CHECK(std::abs(v(r.f1) - 2 * p * s / (p + s)) <= 1e-12);
    CHECK(v(r.fpr) == 1.0 - v(r.specificity));
    CHECK(v(r.accuracy) == doctest::Approx((c.tp + c.tn) / c.total()).epsilon(1e-15));
  }
}

TEST_CASE("roc examples") {
  const std::vector<double> s{0.9, 0.1};
  const std::vector<Label> t{P, N};
  const auto curve = roc_curve(s, t);
  CHECK(std::find(curve.points.begin(), curve.points.end(), RocPoint{0, 1}) != curve.points.end());
  CHECK(auc(curve) == 1.0);

  const std::vector<double> flat{0.4, 0.4, 0.4, 0.4};
  const std::vector<Label> t4{P, N, P, N};
  const auto c2 = roc_curve(flat, t4);
  REQUIRE(c2.points.size() == 2);
  CHECK(c2.points[0] == RocPoint{0, 0});
  CHECK(c2.points[1] == RocPoint{1, 1});
  CHECK(auc(c2) == 0.5);

  const std::vector<double> inv{0.1, 0.9, 0.2, 0.8};
  CHECK(auc(roc_curve(inv, t4)) == 0.0);

  const std::vector<Label> one{P, P};
  CHECK_THROWS_AS(roc_curve(s, one), Error);
  const std::vector<Label> three{P, N, P};
  CHECK_THROWS_AS(roc_curve(s, three), Error);
}

TEST_CASE("roc points match threshold oracle and AUC matches pairwise statistic") {
  SplitMix64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 20 + rng.below(181);
    auto t = random_labels(rng, n, 0.3 + 0.4 * rng.uniform());
    t[0] = P;
    t[1] = N;
    std::vector<double> s(n);
    // Coarse scores force ties.
    for (std::size_t i = 0; i < n; ++i) s[i] = std::round((rng.uniform() + (t[i] == P ? 0.3 : 0.0)) * 20) / 20;
    const auto curve = roc_curve(s, t);

    CHECK(curve.points.front() == RocPoint{0, 0});
    CHECK(curve.points.back() == RocPoint{1, 1});
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
      CHECK(curve.points[i].fpr >= curve.points[i - 1].fpr);
      CHECK(curve.points[i].tpr >= curve.points[i - 1].tpr);
      CHECK_FALSE(curve.points[i] == curve.points[i - 1]);
    }
    const auto expected = oracle::threshold_points(s, t);
    std::set<std::pair<double, double>> got;
    for (const auto& p : curve.points) got.insert({p.fpr, p.tpr});
    CHECK(got == expected);
    CHECK(std::abs(auc(curve) - oracle::mann_whitney(s, t)) <= 1e-9);

    // Strictly monotone transform leaves the curve unchanged.
    std::vector<double> g(n);
    std::transform(s.begin(), s.end(), g.begin(), [](double x) { return std::exp(3 * x) - 7; });
    const auto cg = roc_curve(g, t);
    CHECK(cg.points == curve.points);
    CHECK(auc(cg) == auc(curve));
  }
}

TEST_CASE("roc csv") {
  const std::vector<double> s{0.9, 0.1};
  const std::vector<Label> t{P, N};
  const auto curve = roc_curve(s, t);
  const auto csv = roc_csv(curve);
  CHECK(csv.rfind("threshold,fpr,tpr\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(curve.points.size()) + 1);
  CHECK(curve.thresholds.size() == curve.points.size());
}

TEST_CASE("wilson interval") {
  const double z = 1.959963984540054;
  const auto all = accuracy_ci(286, 286);
  CHECK(all.hi == 1.0);
  CHECK(all.lo == doctest::Approx(286.0 / (286.0 + z * z)).epsilon(1e-12));
  CHECK(all.lo == doctest::Approx(0.98675).epsilon(1e-4));
  const double center = (286 + z * z / 2) / (286 + z * z);
  CHECK(all.lo <= center);
  CHECK(center <= all.hi);

  CHECK(accuracy_ci(0, 10).lo == 0.0);
  CHECK_THROWS_AS(accuracy_ci(11, 10), Error);
  CHECK_THROWS_AS(accuracy_ci(0, 0), Error);

  const auto mid = accuracy_ci(30, 50);
  const double p = 0.6, n = 50;
  const double c = (p + z * z / (2 * n)) / (1 + z * z / n);
  const double h = z / (1 + z * z / n) * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n));
  CHECK(mid.lo == doctest::Approx(c - h).epsilon(1e-12));
  CHECK(mid.hi == doctest::Approx(c + h).epsilon(1e-12));
}

TEST_CASE("wilson stays within clopper-pearson band") {
  SplitMix64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = 10 + rng.below(500);
    const std::size_t k = rng.below(n + 1);
    const double cp_lo = k == 0 ? 0.0 : boost::math::ibeta_inv(double(k), double(n - k + 1), 0.025);
    const double cp_hi = k == n ? 1.0 : boost::math::ibeta_inv(double(k + 1), double(n - k), 0.975);
    const auto w = accuracy_ci(k, n);
    CAPTURE(k);
    CAPTURE(n);
    CHECK(w.lo >= cp_lo - 0.02);
    CHECK(w.hi <= cp_hi + 0.02);
    CHECK(w.lo <= double(k) / n);
    CHECK(double(k) / n <= w.hi);
  }
}

TEST_CASE("report json round trip") {
  auto r = basic_metrics({258, 1, 24, 3});
  REQUIRE(r.ci95.has_value());
  const std::vector<double> s{0.9, 0.1, 0.8};
  const std::vector<Label> t{P, N, N};
  r.auc = Metric::of(auc(roc_curve(s, t)));
  const nlohmann::json j = r;
  const auto back = j.get<MetricsReport>();
  CHECK(back.counts == r.counts);
  CHECK(back.accuracy == r.accuracy);
  CHECK(back.auc == r.auc);
  CHECK(back.ci95 == r.ci95);
  const auto u = basic_metrics({0, 0, 5, 0});
  const nlohmann::json ju = u;
  CHECK(ju.get<MetricsReport>().sensitivity == u.sensitivity);
}
