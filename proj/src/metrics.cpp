#include "oodmine/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <set>

#include "oodmine/corpus.hpp"
#include "oodmine/error.hpp"
#include "oodmine/similarity.hpp"

namespace oodmine {
namespace {

void check_scores(std::span<const double> id_scores, std::span<const double> ood_scores) {
  if (id_scores.empty() || ood_scores.empty()) throw Error(Errc::empty_input, "metrics need ID and OOD scores");
  auto finite = [](std::span<const double> s) {
    return std::all_of(s.begin(), s.end(), [](double v) { return std::isfinite(v); });
  };
  if (!finite(id_scores) || !finite(ood_scores)) throw Error(Errc::non_finite, "scores contain NaN or Inf");
}

std::vector<double> sorted(std::span<const double> s) {
  std::vector<double> v(s.begin(), s.end());
  std::sort(v.begin(), v.end());
  return v;
}

std::set<std::string> folded(const LabelList& labels) {
  std::set<std::string> out;
  for (const auto& l : labels) out.insert(dedup_key(l));
  return out;
}

}  // namespace

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
  check_scores(id_scores, ood_scores);
  const auto id = sorted(id_scores);
  const auto ood = sorted(ood_scores);
  // Twice the Mann-Whitney U: 2 * #(id > ood) + #(id == ood), exact in integers.
  std::uint64_t twice_u = 0;
  std::size_t below = 0;  // ood values strictly below the current id value
  std::size_t upto = 0;   // ood values at or below it
  for (double v : id) {
    while (below < ood.size() && ood[below] < v) ++below;
    upto = std::max(upto, below);
    while (upto < ood.size() && ood[upto] <= v) ++upto;
    twice_u += 2 * below + (upto - below);
  }
  // Divide the smaller side and complement the larger so that swapping the
  // arguments sums to exactly 1.
  const std::uint64_t total = 2 * static_cast<std::uint64_t>(id.size()) * ood.size();
  const std::uint64_t smaller = std::min(twice_u, total - twice_u);
  const double r = static_cast<double>(smaller) / static_cast<double>(total);
  return twice_u == smaller ? r : 1.0 - r;
}

double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores, double tpr) {
  check_scores(id_scores, ood_scores);
  if (!(tpr > 0.0 && tpr <= 1.0)) throw Error(Errc::invalid_argument, "tpr must lie in (0, 1]");
  auto id = sorted(id_scores);
  const auto n = id.size();
  auto needed = static_cast<std::size_t>(std::ceil(tpr * static_cast<double>(n) - 1e-9));
  needed = std::clamp<std::size_t>(needed, 1, n);
  const double threshold = id[n - needed];
  const auto above = std::count_if(ood_scores.begin(), ood_scores.end(), [&](double v) { return v >= threshold; });
  return static_cast<double>(above) / static_cast<double>(ood_scores.size());
}

LabelQuality label_f1_overlap(const LabelList& pos, const LabelList& gt) {
  if (gt.empty()) throw Error(Errc::empty_input, "ground-truth label list is empty");
  const auto p = folded(pos);
  const auto g = folded(gt);
  std::size_t common = 0;
  for (const auto& l : p) common += g.count(l);
  LabelQuality q;
  q.overlap = static_cast<double>(common) / static_cast<double>(g.size());
  const double precision = p.empty() ? 0.0 : static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = q.overlap;
  q.f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  return q;
}

std::size_t similarity_bin(double value, std::size_t bins) {
  const double pos = (value + 1.0) / 2.0 * static_cast<double>(bins);
  if (!(pos > 0.0)) return 0;
  return std::min(static_cast<std::size_t>(std::floor(pos)), bins - 1);
}

std::vector<double> text_similarity_histogram(const EmbeddingMatrix& pos_text, const EmbeddingMatrix& gt_text,
                                              std::size_t bins) {
  if (bins == 0) throw Error(Errc::invalid_argument, "histogram needs at least one bin");
  if (pos_text.is_empty() || gt_text.is_empty()) throw Error(Errc::empty_input, "histogram needs labels on both sides");
  std::vector<double> best(static_cast<std::size_t>(pos_text.rows()), -std::numeric_limits<double>::infinity());
  for_each_similarity_tile(pos_text, gt_text, [&](Index q0, Index, const Eigen::MatrixXd& tile) {
    for (Index r = 0; r < tile.rows(); ++r) {
      auto& b = best[static_cast<std::size_t>(q0 + r)];
      b = std::max(b, tile.row(r).maxCoeff());
    }
  });
  std::vector<double> hist(bins, 0.0);
  for (double v : best) hist[similarity_bin(v, bins)] += 1.0;
  for (double& h : hist) h /= static_cast<double>(best.size());
  return hist;
}

std::size_t HierarchyGraph::intern(const std::string& node) {
  auto [it, inserted] = ids_.emplace(node, names_.size());
  if (inserted) {
    names_.push_back(node);
    adjacency_.emplace_back();
  }
  return it->second;
}

void HierarchyGraph::add_edge(const std::string& a, const std::string& b) {
  if (a == b) throw Error(Errc::invalid_argument, "self loop on '" + a + "'");
  const auto ia = intern(a);
  const auto ib = intern(b);
  auto& na = adjacency_[ia];
  if (std::find(na.begin(), na.end(), ib) != na.end()) return;
  na.push_back(ib);
  adjacency_[ib].push_back(ia);
  ++edges_;
}

std::optional<std::size_t> HierarchyGraph::id_of(const std::string& node) const {
  if (auto it = ids_.find(node); it != ids_.end()) return it->second;
  return std::nullopt;
}

std::vector<std::optional<std::size_t>> HierarchyGraph::distances_from(std::span<const std::size_t> sources) const {
  std::vector<std::optional<std::size_t>> dist(names_.size());
  std::deque<std::size_t> queue;
  for (auto s : sources) {
    if (!dist[s]) {
      dist[s] = 0;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    for (auto v : adjacency_[u]) {
      if (dist[v]) continue;
      dist[v] = *dist[u] + 1;
      queue.push_back(v);
    }
  }
  return dist;
}

HierarchyGraph HierarchyGraph::parse(std::istream& in) {
  HierarchyGraph g;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos || tab == 0 ||
        tab + 1 == line.size())
      throw Error(Errc::parse, "edge line " + std::to_string(line_no) + " is not 'nodeA<TAB>nodeB'");
    g.add_edge(line.substr(0, tab), line.substr(tab + 1));
  }
  return g;
}

HierarchyGraph HierarchyGraph::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  return parse(in);
}

std::vector<std::optional<std::size_t>> hierarchy_hops(const LabelList& pos, const LabelList& gt,
                                                       const HierarchyGraph& graph) {
  std::vector<std::size_t> sources;
  for (const auto& label : gt)
    if (auto id = graph.id_of(label)) sources.push_back(*id);
  const auto dist = graph.distances_from(sources);
  const std::set<std::string> gt_set(gt.begin(), gt.end());
  std::vector<std::optional<std::size_t>> out;
  out.reserve(pos.size());
  for (const auto& label : pos) {
    if (gt_set.count(label)) {
      out.emplace_back(0);
      continue;
    }
    const auto id = graph.id_of(label);
    out.push_back(id ? dist[*id] : std::nullopt);
  }
  return out;
}

EvalReport evaluate(std::span<const double> id_scores, std::span<const double> ood_scores, std::string method,
                    std::string ood_name) {
  EvalReport r;
  r.method = std::move(method);
  r.ood_name = std::move(ood_name);
  r.auroc = auroc(id_scores, ood_scores);
  r.fpr_at_95tpr = fpr_at_tpr(id_scores, ood_scores, 0.95);
  r.n_id = id_scores.size();
  r.n_ood = ood_scores.size();
  return r;
}

double robustness_delta(const EvalReport& reference, const EvalReport& shifted) {
  if (reference.auroc == 0.0) throw Error(Errc::invalid_argument, "reference AUROC is zero");
  return 100.0 * (shifted.auroc - reference.auroc) / reference.auroc;
}

}  // namespace oodmine
