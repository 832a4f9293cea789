// cxr: command-line front end for the chest-radiograph triage pipeline.

#include "cxr/config.hpp"
#include "cxr/ensemble.hpp"
#include "cxr/error.hpp"
#include "cxr/extractor.hpp"
#include "cxr/hashing.hpp"
#include "cxr/head.hpp"
#include "cxr/manifest.hpp"
#include "cxr/metrics.hpp"
#include "cxr/pipeline.hpp"
#include "cxr/report.hpp"
#include "cxr/rng.hpp"
#include "cxr/synth.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void print_error(std::string_view kind, const std::string& message, const std::string& context = {}) {
  json err{{"kind", kind}, {"message", message}};
  if (!context.empty()) err["context"] = context;
  std::cerr << json{{"error", err}}.dump() << std::endl;
}

json read_config_doc(const std::optional<std::string>& path) {
  if (!path) return json::object();
  std::ifstream in(*path);
  if (!in) throw cxr::Error(cxr::ErrorKind::Io, "cannot open config " + *path);
  std::stringstream buf;
  buf << in.rdbuf();
  return cxr::parse_toml_subset(buf.str());
}

fs::path config_base(const std::optional<std::string>& path) {
  return path ? fs::path(*path).parent_path() : fs::path{};
}

void apply_sets(json& doc, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw cxr::Error(cxr::ErrorKind::InvalidArgument, "--set expects section.key=value, got " + s);
    cxr::apply_override(doc, s.substr(0, eq), s.substr(eq + 1));
  }
}

std::vector<cxr::Label> labels_for(const cxr::Manifest& m, const std::vector<std::string>& ids) {
  std::vector<cxr::Label> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto i = m.find(id);
    if (i == cxr::Manifest::npos)
      throw cxr::Error(cxr::ErrorKind::Inconsistent, "sample " + id + " is not in the manifest");
    out.push_back(m.samples()[i].label);
  }
  return out;
}

json metrics_bundle(const std::vector<cxr::Label>& predicted, const std::vector<double>& scores,
                    const std::vector<cxr::Label>& truth, const fs::path& out_dir) {
  const auto report = cxr::evaluate_scores(predicted, scores, truth);
  if (report.auc.defined()) {
    cxr::write_file_atomic(out_dir / "roc.csv", cxr::roc_csv(cxr::roc_curve(scores, truth)));
  }
  json j = report;
  cxr::write_file_atomic(out_dir / "metrics.json", j.dump(2) + "\n");
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chest-radiograph triage: transfer-learning heads, k-fold CV, majority-vote ensemble"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus with a manifest");
  std::size_t n_pos = 261, n_neg = 25;
  std::uint64_t synth_seed = 0;
  int synth_side = 256;
  std::string synth_out;
  synth->add_option("--n-pos", n_pos, "Number of covid images")->capture_default_str();
  synth->add_option("--n-neg", n_neg, "Number of normal images")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Generator seed")->required();
  synth->add_option("--side", synth_side, "Image side in pixels")->capture_default_str();
  synth->add_option("--out", synth_out, "Output directory")->required();

  // plan-folds
  auto* plan_cmd = app.add_subcommand("plan-folds", "Write a k-fold cross-validation plan as JSON");
  std::string plan_manifest, plan_out;
  std::size_t plan_k = 5;
  std::uint64_t plan_seed = 0;
  bool plan_unstratified = false;
  plan_cmd->add_option("--manifest", plan_manifest, "Manifest CSV")->required();
  plan_cmd->add_option("--k", plan_k, "Fold count")->capture_default_str();
  plan_cmd->add_option("--seed", plan_seed, "Split seed")->required();
  plan_cmd->add_flag("--unstratified", plan_unstratified, "Disable per-class stratification");
  plan_cmd->add_option("--out", plan_out, "Output JSON path (stdout if omitted)");

  // extract
  auto* extract_cmd = app.add_subcommand("extract", "Run a frozen backbone over manifest images");
  std::string ex_manifest, ex_backbone, ex_out, ex_plan, ex_split = "all", ex_cache;
  std::optional<std::string> ex_config;
  std::vector<std::string> ex_sets;
  std::size_t ex_fold = 1;
  extract_cmd->add_option("--manifest", ex_manifest, "Manifest CSV")->required();
  extract_cmd->add_option("--backbone", ex_backbone, "\"toypool\" or a backbone metadata JSON")->required();
  extract_cmd->add_option("--out", ex_out, "Feature file to write")->required();
  extract_cmd->add_option("--plan", ex_plan, "Fold plan JSON (restricts samples to one split)");
  extract_cmd->add_option("--fold", ex_fold, "1-based fold index used with --plan")->capture_default_str();
  extract_cmd->add_option("--split", ex_split, "all | train | test")
      ->check(CLI::IsMember({"all", "train", "test"}))
      ->capture_default_str();
  extract_cmd->add_option("--config", ex_config, "Pipeline config; its [augment] and seeds.augment apply to --split train");
  extract_cmd->add_option("--set", ex_sets, "Config override section.key=value");
  extract_cmd->add_option("--cache", ex_cache, "Feature cache directory");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a softmax head on cached features");
  std::string tr_features, tr_manifest, tr_out;
  std::uint64_t tr_init_seed = 0;
  cxr::TrainConfig tr_cfg;
  bool tr_no_shuffle = false;
  train_cmd->add_option("--features", tr_features, "Feature file")->required();
  train_cmd->add_option("--manifest", tr_manifest, "Manifest CSV supplying labels")->required();
  train_cmd->add_option("--out", tr_out, "Head JSON to write")->required();
  train_cmd->add_option("--init-seed", tr_init_seed, "Head initialization seed")->required();
  train_cmd->add_option("--seed", tr_cfg.seed, "SGD shuffling seed")->required();
  train_cmd->add_option("--epochs", tr_cfg.epochs)->capture_default_str();
  train_cmd->add_option("--batch-size", tr_cfg.batch_size)->capture_default_str();
  train_cmd->add_option("--lr", tr_cfg.learning_rate, "Learning rate")->capture_default_str();
  train_cmd->add_flag("--no-shuffle", tr_no_shuffle, "Keep the feature order every epoch");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Score features with a trained head and compute metrics");
  std::string ev_head, ev_features, ev_manifest, ev_out;
  eval_cmd->add_option("--head", ev_head, "Head JSON")->required();
  eval_cmd->add_option("--features", ev_features, "Feature file")->required();
  eval_cmd->add_option("--manifest", ev_manifest, "Manifest CSV supplying ground truth")->required();
  eval_cmd->add_option("--out", ev_out, "Output directory")->required();

  // ensemble
  auto* ens_cmd = app.add_subcommand("ensemble", "Majority-vote an ensemble definition over a manifest");
  std::string en_def, en_manifest, en_out, en_cache;
  std::vector<std::string> en_features;
  ens_cmd->add_option("--ensemble", en_def, "Ensemble definition JSON")->required();
  ens_cmd->add_option("--manifest", en_manifest, "Manifest CSV supplying ground truth")->required();
  ens_cmd->add_option("--features", en_features, "Feature file per member, in member order (else extracted)");
  ens_cmd->add_option("--out", en_out, "Output directory")->required();
  ens_cmd->add_option("--cache", en_cache, "Feature cache directory");

  // run
  auto* run_cmd = app.add_subcommand("run", "Run the full cross-validated pipeline and write the report");
  std::optional<std::string> run_config;
  std::vector<std::string> run_sets, run_backbones;
  std::optional<std::string> run_manifest, run_out;
  std::optional<std::size_t> run_folds;
  std::optional<int> run_epochs, run_batch;
  std::optional<double> run_lr;
  std::optional<std::uint64_t> seed_split, seed_init, seed_train, seed_augment;
  run_cmd->add_option("--config", run_config, "Pipeline config file");
  run_cmd->add_option("--set", run_sets, "Config override section.key=value (repeatable)");
  run_cmd->add_option("--manifest", run_manifest, "Overrides run.manifest");
  run_cmd->add_option("--out", run_out, "Overrides run.output_dir");
  run_cmd->add_option("--folds", run_folds, "Overrides run.folds");
  run_cmd->add_option("--backbone", run_backbones, "Overrides members.backbones (repeatable)");
  run_cmd->add_option("--epochs", run_epochs, "Overrides train.epochs");
  run_cmd->add_option("--batch-size", run_batch, "Overrides train.batch_size");
  run_cmd->add_option("--lr", run_lr, "Overrides train.learning_rate");
  run_cmd->add_option("--seed-split", seed_split);
  run_cmd->add_option("--seed-init", seed_init);
  run_cmd->add_option("--seed-train", seed_train);
  run_cmd->add_option("--seed-augment", seed_augment);

  // report
  auto* report_cmd = app.add_subcommand("report", "Re-render report files from a summary.json");
  std::string rp_summary, rp_out;
  report_cmd->add_option("--summary", rp_summary, "summary.json written by run")->required();
  report_cmd->add_option("--out", rp_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (*synth) {
      cxr::SynthOptions opts;
      opts.side = synth_side;
      const auto m = cxr::make_synthetic_corpus(n_pos, n_neg, synth_seed, synth_out, opts);
      std::cout << json{{"manifest", (fs::path(synth_out) / "manifest.csv").string()},
                        {"samples", m.size()},
                        {"covid", m.class_counts().positive},
                        {"normal", m.class_counts().negative}}
                       .dump()
                << std::endl;
    } else if (*plan_cmd) {
      const auto m = cxr::load_manifest(plan_manifest);
      const json j = cxr::plan_folds(m, plan_k, plan_seed, !plan_unstratified);
      if (plan_out.empty()) std::cout << j.dump(2) << std::endl;
      else cxr::write_file_atomic(plan_out, j.dump(2) + "\n");
    } else if (*extract_cmd) {
      const auto m = cxr::load_manifest(ex_manifest);
      const auto bb = cxr::load_backbone(ex_backbone);
      cxr::ExtractRequest req;
      if (ex_split == "all") {
        for (std::size_t i = 0; i < m.size(); ++i) req.indices.push_back(i);
      } else {
        if (ex_plan.empty()) throw cxr::Error(cxr::ErrorKind::InvalidArgument, "--split train|test needs --plan");
        std::ifstream in(ex_plan);
        if (!in) throw cxr::Error(cxr::ErrorKind::Io, "cannot open plan " + ex_plan);
        const auto plan = json::parse(in).get<cxr::FoldPlan>();
        if (plan.n != m.size()) throw cxr::Error(cxr::ErrorKind::Inconsistent, "plan does not match the manifest size");
        if (ex_fold < 1 || ex_fold > plan.k) throw cxr::Error(cxr::ErrorKind::InvalidArgument, "--fold out of range");
        req.indices = ex_split == "test" ? plan.test_indices(ex_fold - 1) : plan.train_indices(ex_fold - 1);
        if (ex_split == "train" && (ex_config || !ex_sets.empty())) {
          auto doc = read_config_doc(ex_config);
          apply_sets(doc, ex_sets);
          const auto& a = doc.at("augment");
          cxr::AugmentConfig ac;
          ac.enabled = a.at("enabled").get<bool>();
          ac.flip_x_prob = a.at("flip_x_prob").get<double>();
          ac.flip_y_prob = a.at("flip_y_prob").get<double>();
          ac.rotation_range_deg = a.at("rotation_range_deg").get<double>();
          ac.shear_range = a.at("shear_range").get<double>();
          if (ac.enabled) {
            req.augment = ac;
            req.augment_seed = cxr::derive_seed(doc.at("seeds").at("augment").get<std::uint64_t>(), {ex_fold - 1});
          }
        }
      }
      std::optional<cxr::FeatureCache> cache;
      if (!ex_cache.empty()) cache.emplace(ex_cache);
      const auto fm = cxr::extract_manifest(*bb, m, req, cache ? &*cache : nullptr);
      cxr::save_features(ex_out, fm);
      std::cout << json{{"features", ex_out}, {"rows", fm.rows}, {"dim", fm.dim}, {"backbone", bb->spec().name}}.dump()
                << std::endl;
    } else if (*train_cmd) {
      tr_cfg.shuffle = !tr_no_shuffle;
      const auto m = cxr::load_manifest(tr_manifest);
      const auto fm = cxr::load_features(tr_features);
      const auto labels = labels_for(m, fm.sample_ids);
      const auto result = cxr::train(fm, labels, tr_cfg, tr_init_seed);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << std::endl;
      cxr::save_head(tr_out, result.head);
      std::cout << json{{"head", tr_out}, {"epoch_loss", result.epoch_loss}}.dump() << std::endl;
    } else if (*eval_cmd) {
      const auto m = cxr::load_manifest(ev_manifest);
      const auto head = cxr::load_head(ev_head);
      const auto fm = cxr::load_features(ev_features);
      const auto truth = labels_for(m, fm.sample_ids);
      const auto preds = cxr::forward(head, fm);
      std::vector<cxr::Label> labels;
      std::vector<double> scores;
      for (const auto& p : preds) {
        labels.push_back(p.label);
        scores.push_back(p.score);
      }
      fs::create_directories(ev_out);
      cxr::write_file_atomic(fs::path(ev_out) / "predictions.json", json(preds).dump(2) + "\n");
      std::cout << metrics_bundle(labels, scores, truth, ev_out).dump() << std::endl;
    } else if (*ens_cmd) {
      const auto m = cxr::load_manifest(en_manifest);
      const auto model = cxr::load_ensemble(en_def);
      std::vector<cxr::FeatureMatrix> features;
      if (!en_features.empty()) {
        if (en_features.size() != model.members.size())
          throw cxr::Error(cxr::ErrorKind::Inconsistent, "pass one --features file per ensemble member");
        for (const auto& f : en_features) features.push_back(cxr::load_features(f));
      } else {
        std::optional<cxr::FeatureCache> cache;
        if (!en_cache.empty()) cache.emplace(en_cache);
        cxr::ExtractRequest req;
        for (std::size_t i = 0; i < m.size(); ++i) req.indices.push_back(i);
        for (const auto& mem : model.members) {
          const auto bb = cxr::load_backbone(mem.backbone);
          features.push_back(cxr::extract_manifest(*bb, m, req, cache ? &*cache : nullptr));
        }
      }
      const auto votes = cxr::predict_ensemble(model, features);
      std::vector<std::string> ids;
      std::vector<cxr::Label> labels;
      std::vector<double> scores;
      for (const auto& v : votes) {
        ids.push_back(v.sample_id);
        labels.push_back(v.fused_label);
        scores.push_back(v.fused_score);
      }
      fs::create_directories(en_out);
      cxr::write_file_atomic(fs::path(en_out) / "votes.json", json(votes).dump(2) + "\n");
      std::cout << metrics_bundle(labels, scores, labels_for(m, ids), en_out).dump() << std::endl;
    } else if (*run_cmd) {
      auto doc = read_config_doc(run_config);
      if (run_manifest) doc["run"]["manifest"] = *run_manifest;
      if (run_out) doc["run"]["output_dir"] = *run_out;
      if (run_folds) doc["run"]["folds"] = *run_folds;
      if (!run_backbones.empty()) doc["members"]["backbones"] = run_backbones;
      if (run_epochs) doc["train"]["epochs"] = *run_epochs;
      if (run_batch) doc["train"]["batch_size"] = *run_batch;
      if (run_lr) doc["train"]["learning_rate"] = *run_lr;
      if (seed_split) doc["seeds"]["split"] = *seed_split;
      if (seed_init) doc["seeds"]["init"] = *seed_init;
      if (seed_train) doc["seeds"]["train"] = *seed_train;
      if (seed_augment) doc["seeds"]["augment"] = *seed_augment;
      apply_sets(doc, run_sets);
      auto base = config_base(run_config);
      // Paths given on the command line are relative to the working directory.
      if (run_manifest) doc["run"]["manifest"] = fs::absolute(*run_manifest).string();
      if (run_out) doc["run"]["output_dir"] = fs::absolute(*run_out).string();
      const auto cfg = cxr::config_from_document(doc, base);
      const auto summary = cxr::run_pipeline(cfg);
      json brief = json::object();
      for (const auto& ms : summary.models) brief[ms.name] = ms.pooled;
      std::cout << json{{"output_dir", cfg.output_dir.string()}, {"pooled", brief}}.dump() << std::endl;
    } else if (*report_cmd) {
      const auto summary = cxr::load_summary(rp_summary);
      cxr::write_report(summary, rp_out);
      std::cout << json{{"report", (fs::path(rp_out) / "report.md").string()}}.dump() << std::endl;
    }
  } catch (const cxr::Error& e) {
    print_error(cxr::to_string(e.kind()), e.what(), e.context());
    return 1;
  } catch (const nlohmann::json::exception& e) {
    print_error("parse", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}
