#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "oodmine/embedding_io.hpp"

namespace oodmine {

// Scores follow one orientation everywhere: larger means more in-distribution.

/// P(id > ood) + 0.5 P(id == ood) over all pairs, via sort-and-merge.
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

/// Fraction of OOD scores at or above the largest threshold that keeps at
/// least ceil(tpr * n_id) ID scores at or above it.
double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores, double tpr = 0.95);

struct LabelQuality {
  double overlap = 0.0;  // |gt & pos| / |gt|
  double f1 = 0.0;
};

/// Set comparison on case-folded label strings.
LabelQuality label_f1_overlap(const LabelList& pos, const LabelList& gt);

/// For each positive label, its largest cosine to any GT label, histogrammed
/// over [-1, 1] with uniform bins (left-closed, last bin closed) and
/// normalized to sum 1.
std::vector<double> text_similarity_histogram(const EmbeddingMatrix& pos_text, const EmbeddingMatrix& gt_text,
                                              std::size_t bins);

/// Bin index for a value in [-1, 1] under the histogram's edge convention.
std::size_t similarity_bin(double value, std::size_t bins);

/// Undirected simple graph over label strings.
class HierarchyGraph {
 public:
  void add_edge(const std::string& a, const std::string& b);
  bool contains(const std::string& node) const { return ids_.count(node) != 0; }
  std::size_t node_count() const noexcept { return names_.size(); }
  std::size_t edge_count() const noexcept { return edges_; }

  /// BFS hop counts from the given sources to every node (nullopt when unreachable).
  std::vector<std::optional<std::size_t>> distances_from(std::span<const std::size_t> sources) const;
  std::optional<std::size_t> id_of(const std::string& node) const;

  /// One `nodeA<TAB>nodeB` edge per line.
  static HierarchyGraph parse(std::istream& in);
  static HierarchyGraph load(const std::filesystem::path& path);

 private:
  std::size_t intern(const std::string& node);

  std::unordered_map<std::string, std::size_t> ids_;
  std::vector<std::string> names_;
  std::vector<std::vector<std::size_t>> adjacency_;
  std::size_t edges_ = 0;
};

/// Minimum hop count from each positive label to any GT label; nullopt
/// (infinite) when the label is absent from the graph or disconnected. A
/// label that is itself in `gt` is 0 hops away.
std::vector<std::optional<std::size_t>> hierarchy_hops(const LabelList& pos, const LabelList& gt,
                                                       const HierarchyGraph& graph);

struct EvalReport {
  std::string method;
  std::string ood_name;
  double auroc = 0.0;
  double fpr_at_95tpr = 0.0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
  std::optional<LabelQuality> label_quality;
};

EvalReport evaluate(std::span<const double> id_scores, std::span<const double> ood_scores, std::string method,
                    std::string ood_name);

/// Relative AUROC change in percent.
double robustness_delta(const EvalReport& reference, const EvalReport& shifted);

}  // namespace oodmine
