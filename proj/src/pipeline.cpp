#include "cxr/pipeline.hpp"
#include "cxr/error.hpp"
#include "cxr/hashing.hpp"
#include "cxr/report.hpp"
#include "cxr/rng.hpp"

#include <chrono>
#include <ctime>
#include <iomanip>
#include <memory>
#include <sstream>

#ifndef CXR_VERSION
#define CXR_VERSION "dev"
#endif

namespace cxr {

MetricsReport evaluate_scores(std::span<const Label> predicted, std::span<const double> scores,
                              std::span<const Label> truth) {
  auto report = basic_metrics(confusion(predicted, truth));
  const auto n_pos = std::count(truth.begin(), truth.end(), Label::Positive);
  if (n_pos == 0 || n_pos == static_cast<std::ptrdiff_t>(truth.size()))
    report.auc = Metric::undefined("auc needs both classes among the evaluated samples");
  else
    report.auc = Metric::of(auc(roc_curve(scores, truth)));
  return report;
}

std::map<std::string, Metric> mean_over_folds(const std::vector<const MetricsReport*>& per_fold) {
  std::map<std::string, Metric> out;
  for (auto name : kMetricNames) {
    double sum = 0.0;
    std::optional<std::size_t> undefined_fold;
    for (std::size_t f = 0; f < per_fold.size(); ++f) {
      const auto& m = metric_by_name(*per_fold[f], name);
      if (!m.defined()) {
        undefined_fold = f;
        break;
      }
      sum += *m.value;
    }
    if (per_fold.empty())
      out[std::string(name)] = Metric::undefined("no folds");
    else if (undefined_fold)
      out[std::string(name)] = Metric::undefined(std::string(name) + " is undefined in fold " +
                                                 std::to_string(*undefined_fold + 1));
    else
      out[std::string(name)] = Metric::of(sum / static_cast<double>(per_fold.size()));
  }
  return out;
}

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

struct PooledScores {
  std::vector<Label> predicted;
  std::vector<double> scores;
  std::vector<Label> truth;
  ConfusionCounts counts;
};

std::string predictions_csv_header(const std::vector<std::string>& names) {
  std::string h = "sample_id,fold,truth";
  for (const auto& n : names) h += "," + n + "_label," + n + "_score";
  return h + ",ensemble_label,ensemble_score\n";
}

}  // namespace

RunSummary run_pipeline(const PipelineConfig& cfg_in) {
  PipelineConfig cfg = cfg_in;
  cfg.finalize();
  std::filesystem::create_directories(cfg.output_dir);
  const auto marker = cfg.output_dir / "RUN_INCOMPLETE";
  write_file_atomic(marker, std::string("{\"status\":\"running\"}\n"));

  RunSummary summary;
  std::string stage = "setup";
  try {
    const Manifest manifest = load_manifest(cfg.manifest);
    const auto truth_all = manifest.labels();
    stage = "plan-folds";
    const FoldPlan plan = plan_folds(manifest, cfg.folds, cfg.seeds.split, cfg.stratified);
    write_file_atomic(cfg.output_dir / "folds.json", nlohmann::json(plan).dump(2) + "\n");

    // Members sharing a backbone share its features.
    stage = "load-backbones";
    std::map<std::string, std::unique_ptr<Backbone>> backbones;
    nlohmann::json model_hashes = nlohmann::json::object();
    for (std::size_t m = 0; m < cfg.backbones.size(); ++m) {
      const auto& b = cfg.backbones[m];
      if (!backbones.contains(b)) {
        try {
          backbones[b] = load_backbone(b);
        } catch (Error& e) {
          e.with_context("member " + cfg.member_names[m]);
          throw;
        }
      }
      model_hashes[cfg.member_names[m]] = {{"backbone", backbones[b]->spec().name},
                                           {"sha256", backbones[b]->model_hash()},
                                           {"feature_dim", backbones[b]->spec().feature_dim}};
    }
    const FeatureCache cache(cfg.cache_dir);

    summary.k = cfg.folds;
    summary.corpus_size = manifest.size();
    summary.member_names = cfg.member_names;
    const auto config_doc = to_json(cfg);
    summary.provenance = {{"code_version", CXR_VERSION},
                          {"config", config_doc},
                          {"config_sha256", sha256_hex(config_doc.dump())},
                          {"manifest_sha256", sha256_file(cfg.manifest)},
                          {"fold_plan_sha256", sha256_hex(nlohmann::json(plan).dump())},
                          {"models", model_hashes}};
    summary.notes = {
        "head: fully connected layer + softmax, mean cross-entropy loss, plain mini-batch SGD",
        "accuracy = (TP + TN) / (TP + FP + TN + FN)",
        "curves are per-image ROC (TPR vs FPR over all thresholds), the curve some authors call FROC",
        "ensemble label: unweighted majority vote, ties -> covid; ensemble score: mean member covid probability",
        "accuracy CI: Wilson score interval at 95%",
        "augmentation is applied to training folds only; test folds are never augmented",
    };

    const std::size_t n_members = cfg.backbones.size();
    std::vector<PooledScores> pooled(n_members + 1);
    std::string predictions_csv = predictions_csv_header(cfg.member_names);

    for (std::size_t f = 0; f < plan.k; ++f) {
      const std::string fold_ctx = "fold " + std::to_string(f + 1);
      stage = fold_ctx;
      const auto train_idx = plan.train_indices(f);
      const auto& test_idx = plan.test_indices(f);
      std::vector<Label> train_truth, test_truth;
      for (auto i : train_idx) train_truth.push_back(truth_all[i]);
      for (auto i : test_idx) test_truth.push_back(truth_all[i]);

      std::map<std::string, FeatureMatrix> train_features, test_features;
      for (const auto& [path, bb] : backbones) {
        try {
          ExtractRequest train_req{train_idx, cfg.augment, derive_seed(cfg.seeds.augment, {f}), 32};
          if (!cfg.augment.enabled) train_req.augment.reset();
          train_features[path] = extract_manifest(*bb, manifest, train_req, &cache);
          test_features[path] = extract_manifest(*bb, manifest, ExtractRequest{test_idx, std::nullopt, 0, 32}, &cache);
        } catch (Error& e) {
          e.with_context(fold_ctx + " / " + bb->spec().name);
          throw;
        }
      }

      FoldResult fr;
      fr.fold = f + 1;
      fr.n_train = train_idx.size();
      fr.n_test = test_idx.size();
      EnsembleModel ensemble;
      std::vector<std::vector<Prediction>> member_preds;
      const auto head_dir = cfg.output_dir / "heads" / ("fold" + std::to_string(f + 1));
      for (std::size_t m = 0; m < n_members; ++m) {
        const auto& name = cfg.member_names[m];
        try {
          TrainConfig tc = cfg.train;
          tc.seed = derive_seed(cfg.seeds.train, {f, m});
          auto trained = train(train_features.at(cfg.backbones[m]), train_truth, tc, cfg.init_seeds[m]);
          const auto head_path = head_dir / (name + ".json");
          save_head(head_path, trained.head);

          auto preds = forward(trained.head, test_features.at(cfg.backbones[m]));
          std::vector<Label> labels;
          std::vector<double> scores;
          for (const auto& p : preds) {
            labels.push_back(p.label);
            scores.push_back(p.score);
          }
          fr.members.push_back(evaluate_scores(labels, scores, test_truth));
          fr.member_final_loss.push_back(trained.epoch_loss.back());
          auto& pool = pooled[m];
          pool.predicted.insert(pool.predicted.end(), labels.begin(), labels.end());
          pool.scores.insert(pool.scores.end(), scores.begin(), scores.end());
          pool.truth.insert(pool.truth.end(), test_truth.begin(), test_truth.end());
          pool.counts += fr.members.back().counts;

          ensemble.members.push_back({name, cfg.backbones[m], std::filesystem::path(name + ".json"), trained.head});
          member_preds.push_back(std::move(preds));
        } catch (Error& e) {
          e.with_context(fold_ctx + " / " + name);
          throw;
        }
      }
      save_ensemble(head_dir / "ensemble.json", ensemble);

      const auto votes = fuse_predictions(member_preds);
      std::vector<Label> fused_labels;
      std::vector<double> fused_scores;
      for (std::size_t i = 0; i < votes.size(); ++i) {
        fused_labels.push_back(votes[i].fused_label);
        fused_scores.push_back(votes[i].fused_score);
        std::ostringstream row;
        row.precision(17);
        row << votes[i].sample_id << ',' << f + 1 << ',' << label_name(test_truth[i]);
        for (std::size_t m = 0; m < n_members; ++m)
          row << ',' << label_name(votes[i].member_labels[m]) << ',' << votes[i].member_scores[m];
        row << ',' << label_name(votes[i].fused_label) << ',' << votes[i].fused_score << '\n';
        predictions_csv += row.str();
      }
      fr.ensemble = evaluate_scores(fused_labels, fused_scores, test_truth);
      auto& pool = pooled[n_members];
      pool.predicted.insert(pool.predicted.end(), fused_labels.begin(), fused_labels.end());
      pool.scores.insert(pool.scores.end(), fused_scores.begin(), fused_scores.end());
      pool.truth.insert(pool.truth.end(), test_truth.begin(), test_truth.end());
      pool.counts += fr.ensemble.counts;
      summary.folds.push_back(std::move(fr));
    }

    stage = "aggregate";
    for (std::size_t m = 0; m <= n_members; ++m) {
      ModelSummary ms;
      ms.is_ensemble = m == n_members;
      ms.name = ms.is_ensemble ? "ensemble" : cfg.member_names[m];
      const auto& pool = pooled[m];
      ms.pooled = basic_metrics(pool.counts);
      ms.pooled_roc = roc_curve(pool.scores, pool.truth);
      ms.pooled.auc = Metric::of(auc(ms.pooled_roc));
      std::vector<const MetricsReport*> per_fold;
      for (const auto& fr : summary.folds) per_fold.push_back(ms.is_ensemble ? &fr.ensemble : &fr.members[m]);
      ms.fold_mean = mean_over_folds(per_fold);
      summary.models.push_back(std::move(ms));
    }
    summary.complete = true;
    summary.generated_at = utc_now();

    stage = "report";
    write_file_atomic(cfg.output_dir / "predictions.csv", predictions_csv);
    write_report(summary, cfg.output_dir);
  } catch (Error& e) {
    write_file_atomic(marker, nlohmann::json{{"status", "incomplete"},
                                             {"stage", stage},
                                             {"error", e.what()},
                                             {"context", e.context()}}
                                  .dump() +
                                  "\n");
    throw;
  }
  std::filesystem::remove(marker);
  return summary;
}

void to_json(nlohmann::json& j, const RunSummary& s) {
  auto folds = nlohmann::json::array();
  for (const auto& f : s.folds) {
    nlohmann::json members = nlohmann::json::object();
    for (std::size_t m = 0; m < f.members.size(); ++m) {
      members[s.member_names.at(m)] = f.members[m];
      members[s.member_names.at(m)]["final_loss"] = f.member_final_loss.at(m);
    }
    folds.push_back({{"fold", f.fold},
                     {"n_train", f.n_train},
                     {"n_test", f.n_test},
                     {"members", members},
                     {"ensemble", f.ensemble}});
  }
  auto models = nlohmann::json::array();
  for (const auto& m : s.models) {
    models.push_back({{"name", m.name},
                      {"is_ensemble", m.is_ensemble},
                      {"pooled", m.pooled},
                      {"pooled_roc", m.pooled_roc},
                      {"fold_mean", m.fold_mean}});
  }
  j = nlohmann::json{{"complete", s.complete},
                     {"k", s.k},
                     {"corpus_size", s.corpus_size},
                     {"member_names", s.member_names},
                     {"folds", folds},
                     {"models", models},
                     {"notes", s.notes},
                     {"provenance", s.provenance},
                     {"generated_at", s.generated_at}};
}

void from_json(const nlohmann::json& j, RunSummary& s) {
  j.at("complete").get_to(s.complete);
  j.at("k").get_to(s.k);
  j.at("corpus_size").get_to(s.corpus_size);
  j.at("member_names").get_to(s.member_names);
  s.folds.clear();
  for (const auto& fj : j.at("folds")) {
    FoldResult f;
    fj.at("fold").get_to(f.fold);
    fj.at("n_train").get_to(f.n_train);
    fj.at("n_test").get_to(f.n_test);
    for (const auto& name : s.member_names) {
      const auto& mj = fj.at("members").at(name);
      f.members.push_back(mj.get<MetricsReport>());
      f.member_final_loss.push_back(mj.at("final_loss").get<double>());
    }
    fj.at("ensemble").get_to(f.ensemble);
    s.folds.push_back(std::move(f));
  }
  s.models.clear();
  for (const auto& mj : j.at("models")) {
    ModelSummary m;
    mj.at("name").get_to(m.name);
    mj.at("is_ensemble").get_to(m.is_ensemble);
    mj.at("pooled").get_to(m.pooled);
    mj.at("pooled_roc").get_to(m.pooled_roc);
    mj.at("fold_mean").get_to(m.fold_mean);
    s.models.push_back(std::move(m));
  }
  s.notes = j.value("notes", std::vector<std::string>{});
  s.provenance = j.value("provenance", nlohmann::json::object());
  s.generated_at = j.value("generated_at", "");
}

}  // namespace cxr
