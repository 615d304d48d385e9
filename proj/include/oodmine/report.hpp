#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oodmine/metrics.hpp"

namespace oodmine {

// One method evaluated against several OOD sets, plus the per-set mean.
struct EvalSummary {
  std::string method;
  std::string id_name;
  std::vector<EvalReport> sets;
  double mean_auroc = 0.0;
  double mean_fpr_at_95tpr = 0.0;
  std::optional<LabelQuality> label_quality;

  EvalReport mean_report() const;
};

EvalSummary summarize(std::string method, std::string id_name, std::vector<EvalReport> sets);

nlohmann::json to_json(const EvalSummary& summary);
EvalSummary summary_from_json(const nlohmann::json& j);
void save_summary(const EvalSummary& summary, const std::filesystem::path& path);
EvalSummary load_summary(const std::filesystem::path& path);

/// Rows are methods, columns the union of OOD set names (first-seen order)
/// followed by "Average"; cells read "AUROC / FPR95" in percent, 2 decimals.
std::string markdown_table(std::span<const EvalSummary> summaries);

struct RobustnessRow {
  std::string method;
  std::string id_name;
  double reference_auroc = 0.0;
  double shifted_auroc = 0.0;
  double delta_percent = 0.0;
};

/// Relative mean-AUROC change of each shifted-ID summary against the
/// reference summary of the same method.
std::vector<RobustnessRow> robustness_rows(std::span<const EvalSummary> references,
                                           std::span<const EvalSummary> shifted);

}  // namespace oodmine
