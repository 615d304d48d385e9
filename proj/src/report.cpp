#include "oodmine/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "oodmine/error.hpp"

namespace oodmine {
namespace {

std::string percent_cell(double auroc, double fpr) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f / %.2f", 100.0 * auroc, 100.0 * fpr);
  return buf;
}

}  // namespace

EvalReport EvalSummary::mean_report() const {
  EvalReport r;
  r.method = method;
  r.ood_name = "mean";
  r.auroc = mean_auroc;
  r.fpr_at_95tpr = mean_fpr_at_95tpr;
  r.label_quality = label_quality;
  return r;
}

EvalSummary summarize(std::string method, std::string id_name, std::vector<EvalReport> sets) {
  if (sets.empty()) throw Error(Errc::empty_input, "summary needs at least one OOD set");
  EvalSummary s;
  s.method = std::move(method);
  s.id_name = std::move(id_name);
  double auroc_sum = 0.0;
  double fpr_sum = 0.0;
  for (const auto& r : sets) {
    auroc_sum += r.auroc;
    fpr_sum += r.fpr_at_95tpr;
  }
  s.mean_auroc = auroc_sum / static_cast<double>(sets.size());
  s.mean_fpr_at_95tpr = fpr_sum / static_cast<double>(sets.size());
  s.sets = std::move(sets);
  return s;
}

nlohmann::json to_json(const EvalSummary& summary) {
  nlohmann::json j;
  j["method"] = summary.method;
  j["id"] = summary.id_name;
  j["sets"] = nlohmann::json::array();
  for (const auto& r : summary.sets)
    j["sets"].push_back({{"ood", r.ood_name}, {"auroc", r.auroc}, {"fpr95", r.fpr_at_95tpr},
                         {"n_id", r.n_id}, {"n_ood", r.n_ood}});
  j["mean"] = {{"auroc", summary.mean_auroc}, {"fpr95", summary.mean_fpr_at_95tpr}};
  if (summary.label_quality)
    j["label_quality"] = {{"overlap", summary.label_quality->overlap}, {"f1", summary.label_quality->f1}};
  return j;
}

EvalSummary summary_from_json(const nlohmann::json& j) {
  try {
    std::vector<EvalReport> sets;
    const auto method = j.at("method").get<std::string>();
    for (const auto& s : j.at("sets")) {
      EvalReport r;
      r.method = method;
      r.ood_name = s.at("ood").get<std::string>();
      r.auroc = s.at("auroc").get<double>();
      r.fpr_at_95tpr = s.at("fpr95").get<double>();
      r.n_id = s.at("n_id").get<std::size_t>();
      r.n_ood = s.at("n_ood").get<std::size_t>();
      sets.push_back(std::move(r));
    }
    auto summary = summarize(method, j.value("id", std::string{}), std::move(sets));
    if (j.contains("label_quality"))
      summary.label_quality = LabelQuality{j["label_quality"].at("overlap").get<double>(),
                                           j["label_quality"].at("f1").get<double>()};
    return summary;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("eval report: ") + e.what());
  }
}

void save_summary(const EvalSummary& summary, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  out << to_json(summary).dump(2) << '\n';
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

EvalSummary load_summary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, path.string() + ": " + e.what());
  }
  return summary_from_json(j);
}

std::string markdown_table(std::span<const EvalSummary> summaries) {
  if (summaries.empty()) throw Error(Errc::empty_input, "no reports to tabulate");
  std::vector<std::string> columns;
  for (const auto& s : summaries)
    for (const auto& r : s.sets)
      if (std::find(columns.begin(), columns.end(), r.ood_name) == columns.end()) columns.push_back(r.ood_name);

  std::ostringstream out;
  out << "| Method |";
  for (const auto& c : columns) out << ' ' << c << " |";
  out << " Average |\n|---|";
  for (std::size_t i = 0; i < columns.size(); ++i) out << "---|";
  out << "---|\n";
  for (const auto& s : summaries) {
    out << "| " << s.method << " |";
    for (const auto& c : columns) {
      auto it = std::find_if(s.sets.begin(), s.sets.end(), [&](const EvalReport& r) { return r.ood_name == c; });
      out << ' ' << (it == s.sets.end() ? std::string("-") : percent_cell(it->auroc, it->fpr_at_95tpr)) << " |";
    }
    out << ' ' << percent_cell(s.mean_auroc, s.mean_fpr_at_95tpr) << " |\n";
  }
  return out.str();
}

std::vector<RobustnessRow> robustness_rows(std::span<const EvalSummary> references,
                                           std::span<const EvalSummary> shifted) {
  std::vector<RobustnessRow> rows;
  for (const auto& s : shifted) {
    auto ref = std::find_if(references.begin(), references.end(),
                            [&](const EvalSummary& r) { return r.method == s.method; });
    if (ref == references.end())
      throw Error(Errc::invalid_argument, "no reference report for method '" + s.method + "'");
    RobustnessRow row;
    row.method = s.method;
    row.id_name = s.id_name;
    row.reference_auroc = ref->mean_auroc;
    row.shifted_auroc = s.mean_auroc;
    row.delta_percent = robustness_delta(ref->mean_report(), s.mean_report());
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace oodmine
