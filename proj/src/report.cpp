#include "cxr/report.hpp"
#include "cxr/error.hpp"
#include "cxr/hashing.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace cxr {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string pct(double part, double total) { return total > 0 ? fmt("%.1f%%", 100.0 * part / total) : "n/a"; }

std::string pct_metric(const Metric& m) { return m.defined() ? fmt("%.2f%%", 100.0 * *m.value) : "undefined"; }

std::string safe_name(const std::string& name) {
  std::string out;
  for (char c : name) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_');
  return out;
}

}  // namespace

std::string render_confusion_table(const ModelSummary& model) {
  const auto& c = model.pooled.counts;
  std::ostringstream os;
  os << model.name << " (pooled over folds)\n";
  os << "                 predicted covid  predicted normal\n";
  os << "actual covid     " << fmt("%15.0f", c.tp) << "  " << fmt("%16.0f", c.fn) << "\n";
  os << "actual normal    " << fmt("%15.0f", c.fp) << "  " << fmt("%16.0f", c.tn) << "\n";
  return os.str();
}

std::string render_markdown(const RunSummary& s) {
  std::ostringstream os;
  os << "# Run report\n\n";
  if (!s.complete) os << "**INCOMPLETE RUN** - numbers below cover only the folds that finished.\n\n";
  os << "Corpus: " << s.corpus_size << " images, " << s.k << "-fold cross-validation, members: ";
  for (std::size_t i = 0; i < s.member_names.size(); ++i) os << (i ? ", " : "") << s.member_names[i];
  os << ".\n\n";

  os << "## Pooled out-of-fold results\n\n";
  os << "Counts are summed over the test folds; percentages are of the whole corpus.\n\n";
  os << "| Model | TP | FP | TN | FN | Accuracy | Sensitivity | Specificity | Precision | NPV | F1 | AUC | 95% CI (accuracy) |\n";
  os << "|---|---|---|---|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& m : s.models) {
    const auto& r = m.pooled;
    const auto& c = r.counts;
    const double n = c.total();
    os << "| " << m.name << " | " << pct(c.tp, n) << " (" << fmt("%.0f", c.tp) << ") | " << pct(c.fp, n) << " ("
       << fmt("%.0f", c.fp) << ") | " << pct(c.tn, n) << " (" << fmt("%.0f", c.tn) << ") | " << pct(c.fn, n) << " ("
       << fmt("%.0f", c.fn) << ") | " << pct_metric(r.accuracy) << " | " << pct_metric(r.sensitivity) << " | "
       << pct_metric(r.specificity) << " | " << pct_metric(r.precision) << " | " << pct_metric(r.npv) << " | "
       << pct_metric(r.f1) << " | " << (r.auc.defined() ? fmt("%.5f", *r.auc.value) : "undefined") << " | "
       << (r.ci95 ? fmt("%.2f", 100 * r.ci95->lo) + " - " + fmt("%.2f", 100 * r.ci95->hi) : "n/a") << " |\n";
  }

  os << "\n## Mean over folds\n\n| Model |";
  for (auto name : kMetricNames) os << ' ' << name << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < std::size(kMetricNames); ++i) os << "---|";
  os << "\n";
  for (const auto& m : s.models) {
    os << "| " << m.name << " |";
    for (auto name : kMetricNames) {
      const auto it = m.fold_mean.find(std::string(name));
      const bool ok = it != m.fold_mean.end() && it->second.defined();
      os << ' ' << (ok ? fmt("%.4f", *it->second.value) : "undefined") << " |";
    }
    os << "\n";
  }

  os << "\n## Per-fold accuracy\n\n| Fold | n_test |";
  for (const auto& n : s.member_names) os << ' ' << n << " |";
  os << " ensemble |\n|---|---|";
  for (std::size_t i = 0; i <= s.member_names.size(); ++i) os << "---|";
  os << "\n";
  for (const auto& f : s.folds) {
    os << "| " << f.fold << " | " << f.n_test << " |";
    for (const auto& r : f.members) os << ' ' << pct_metric(r.accuracy) << " |";
    os << ' ' << pct_metric(f.ensemble.accuracy) << " |\n";
  }

  if (!s.notes.empty()) {
    os << "\n## Method notes\n\n";
    for (const auto& n : s.notes) os << "- " << n << "\n";
  }
  if (s.provenance.contains("config_sha256")) {
    os << "\n## Provenance\n\n";
    os << "- config sha256: `" << s.provenance["config_sha256"].get<std::string>() << "`\n";
    if (s.provenance.contains("manifest_sha256"))
      os << "- manifest sha256: `" << s.provenance["manifest_sha256"].get<std::string>() << "`\n";
    if (s.provenance.contains("code_version"))
      os << "- code version: " << s.provenance["code_version"].get<std::string>() << "\n";
  }
  return os.str();
}

void write_report(const RunSummary& summary, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create report directory " + out_dir.string() + ": " + ec.message());
  write_file_atomic(out_dir / "summary.json", nlohmann::json(summary).dump(2) + "\n");
  for (const auto& m : summary.models) {
    write_file_atomic(out_dir / ("confusion_" + safe_name(m.name) + ".txt"), render_confusion_table(m));
    write_file_atomic(out_dir / ("roc_" + safe_name(m.name) + ".csv"), roc_csv(m.pooled_roc));
  }
  write_file_atomic(out_dir / "report.md", render_markdown(summary));
}

RunSummary load_summary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open summary " + path.string());
  try {
    return nlohmann::json::parse(in).get<RunSummary>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
}

}  // namespace cxr
