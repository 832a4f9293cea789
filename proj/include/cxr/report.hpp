#pragma once

#include "cxr/pipeline.hpp"

#include <filesystem>
#include <string>

namespace cxr {

/// Markdown table with one row per model: TP, FP, TN, FN (as % of the
/// corpus and as counts), Accuracy, AUC and the 95% CI.
std::string render_markdown(const RunSummary& summary);

/// 2x2 text table of pooled counts for one model.
std::string render_confusion_table(const ModelSummary& model);

/// Writes summary.json, confusion_<model>.txt, roc_<model>.csv and
/// report.md into out_dir (created if missing).
void write_report(const RunSummary& summary, const std::filesystem::path& out_dir);

RunSummary load_summary(const std::filesystem::path& path);

}  // namespace cxr
