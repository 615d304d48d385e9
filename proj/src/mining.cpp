#include "oodmine/mining.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_map>

#include "oodmine/error.hpp"
#include "oodmine/similarity.hpp"

namespace oodmine {
namespace {

void check_sorted_subset(const IndexSet& set, std::size_t universe, std::string_view what) {
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set[i] >= universe)
      throw Error(Errc::invalid_argument, std::string(what) + " index " + std::to_string(set[i]) + " out of range");
    if (i > 0 && set[i] <= set[i - 1])
      throw Error(Errc::invalid_argument, std::string(what) + " indices must be sorted and unique");
  }
}

}  // namespace

std::string_view to_string(MiningMethod method) noexcept {
  switch (method) {
    case MiningMethod::posmine: return "posmine";
    case MiningMethod::clustermine: return "clustermine";
    case MiningMethod::given_gt: return "given_gt";
  }
  return "unknown";
}

MiningMethod parse_mining_method(std::string_view name) {
  for (auto m : {MiningMethod::posmine, MiningMethod::clustermine, MiningMethod::given_gt})
    if (name == to_string(m)) return m;
  throw Error(Errc::parse, "unknown mining method '" + std::string(name) + "'");
}

nlohmann::json to_json(const MinedLabelSets& sets) {
  nlohmann::json params = nlohmann::json::object();
  if (sets.params.clusters) params["C"] = *sets.params.clusters;
  if (sets.params.min_count) params["M"] = *sets.params.min_count;
  if (sets.params.k) params["K"] = *sets.params.k;
  if (sets.params.percentile) params["percentile"] = *sets.params.percentile;
  nlohmann::json j;
  j["method"] = to_string(sets.method);
  j["params"] = std::move(params);
  j["pos"] = sets.pos;
  j["neg"] = sets.neg;
  return j;
}

MinedLabelSets mined_from_json(const nlohmann::json& j) {
  try {
    MinedLabelSets sets;
    sets.method = parse_mining_method(j.at("method").get<std::string>());
    const auto& params = j.at("params");
    if (params.contains("C")) sets.params.clusters = params["C"].get<std::size_t>();
    if (params.contains("M")) sets.params.min_count = params["M"].get<std::size_t>();
    if (params.contains("K")) sets.params.k = params["K"].get<std::size_t>();
    if (params.contains("percentile")) sets.params.percentile = params["percentile"].get<double>();
    sets.pos = j.at("pos").get<IndexSet>();
    sets.neg = j.at("neg").get<IndexSet>();
    const auto limit = std::numeric_limits<std::size_t>::max();
    check_sorted_subset(sets.pos, limit, "pos");
    check_sorted_subset(sets.neg, limit, "neg");
    return sets;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("mined label sets: ") + e.what());
  }
}

void save_mined(const MinedLabelSets& sets, const Corpus& corpus, const std::filesystem::path& path) {
  check_sorted_subset(sets.pos, corpus.size(), "pos");
  check_sorted_subset(sets.neg, corpus.size(), "neg");
  {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
    out << to_json(sets).dump(2) << '\n';
    if (!out) throw Error(Errc::io, "write failed for " + path.string());
  }
  LabelList names;
  names.reserve(sets.pos.size());
  for (auto i : sets.pos) names.push_back(corpus.labels[i]);
  auto companion = path;
  companion.replace_extension(".labels.txt");
  save_labels(names, companion);
}

MinedLabelSets load_mined(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, path.string() + ": " + e.what());
  }
  return mined_from_json(j);
}

ZeroShotAssignment zero_shot_assign(const EmbeddingMatrix& images, const EmbeddingMatrix& text) {
  const auto n = static_cast<std::size_t>(images.rows());
  ZeroShotAssignment out{std::vector<std::size_t>(n, 0),
                         std::vector<double>(n, -std::numeric_limits<double>::infinity())};
  if (text.is_empty()) throw Error(Errc::empty_input, "zero-shot assignment needs at least one label");
  for_each_similarity_tile(images, text, [&](Index q0, Index k0, const Eigen::MatrixXd& tile) {
    for (Index r = 0; r < tile.rows(); ++r) {
      const auto i = static_cast<std::size_t>(q0 + r);
      for (Index c = 0; c < tile.cols(); ++c) {
        if (tile(r, c) > out.similarity[i]) {
          out.similarity[i] = tile(r, c);
          out.top1[i] = static_cast<std::size_t>(k0 + c);
        }
      }
    }
  });
  return out;
}

MinedLabelSets posmine(const ZeroShotAssignment& assign, const Corpus& corpus, std::size_t min_count) {
  if (min_count == 0) throw Error(Errc::invalid_argument, "PosMine needs M >= 1");
  std::vector<std::size_t> counts(corpus.size(), 0);
  for (auto label : assign.top1) {
    if (label >= corpus.size()) throw Error(Errc::invalid_argument, "zero-shot label outside the corpus");
    ++counts[label];
  }
  MinedLabelSets sets;
  sets.method = MiningMethod::posmine;
  sets.params.min_count = min_count;
  for (std::size_t i = 0; i < counts.size(); ++i)
    if (counts[i] >= min_count) sets.pos.push_back(i);
  if (sets.pos.empty())
    throw Error(Errc::empty_input, "no label has at least M=" + std::to_string(min_count) + " assigned samples");
  sets.neg = complement_negatives(sets.pos, corpus);
  return sets;
}

std::vector<std::size_t> ClusterMineResult::voted_labels() const {
  std::vector<std::size_t> out;
  for (const auto& label : cluster_labels)
    if (label) out.push_back(*label);
  return out;
}

ClusterMineResult clustermine(const ZeroShotAssignment& assign, const ClusterAssignment& clusters,
                              const Corpus& corpus) {
  if (assign.size() != clusters.size())
    throw Error(Errc::dimension_mismatch, std::to_string(assign.size()) + " zero-shot labels for " +
                                              std::to_string(clusters.size()) + " clustered samples");
  std::vector<std::unordered_map<std::size_t, std::size_t>> votes(clusters.num_clusters);
  for (std::size_t i = 0; i < assign.size(); ++i) {
    if (assign.top1[i] >= corpus.size()) throw Error(Errc::invalid_argument, "zero-shot label outside the corpus");
    ++votes[clusters.assignment[i]][assign.top1[i]];
  }

  ClusterMineResult result;
  result.sets.method = MiningMethod::clustermine;
  result.sets.params.clusters = clusters.num_clusters;
  result.cluster_labels.resize(clusters.num_clusters);
  std::vector<char> is_pos(corpus.size(), 0);
  for (std::size_t c = 0; c < votes.size(); ++c) {
    std::optional<std::size_t> winner;
    std::size_t best = 0;
    for (const auto& [label, count] : votes[c]) {
      if (count > best || (count == best && winner && label < *winner)) {
        best = count;
        winner = label;
      }
    }
    result.cluster_labels[c] = winner;
    if (winner) is_pos[*winner] = 1;
  }
  for (std::size_t i = 0; i < is_pos.size(); ++i)
    if (is_pos[i]) result.sets.pos.push_back(i);
  if (result.sets.pos.empty()) throw Error(Errc::empty_input, "every cluster is empty");
  result.sets.neg = complement_negatives(result.sets.pos, corpus);
  return result;
}

IndexSet complement_negatives(const IndexSet& pos, std::size_t corpus_size) {
  check_sorted_subset(pos, corpus_size, "pos");
  IndexSet neg;
  neg.reserve(corpus_size - pos.size());
  auto it = pos.begin();
  for (std::size_t i = 0; i < corpus_size; ++i) {
    if (it != pos.end() && *it == i) {
      ++it;
      continue;
    }
    neg.push_back(i);
  }
  return neg;
}

IndexSet complement_negatives(const IndexSet& pos, const Corpus& corpus) {
  return complement_negatives(pos, corpus.size());
}

double nearest_rank_quantile(std::vector<double>& values, double percentile) {
  if (values.empty()) throw Error(Errc::empty_input, "quantile of an empty sample");
  if (!(percentile > 0.0 && percentile <= 1.0)) throw Error(Errc::invalid_argument, "percentile must lie in (0, 1]");
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(percentile * static_cast<double>(n) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
  return values[rank - 1];
}

IndexSet negative_mine(const EmbeddingMatrix& pos_text, const EmbeddingMatrix& candidates, std::size_t k,
                       double percentile) {
  if (pos_text.is_empty()) throw Error(Errc::empty_input, "negative mining needs at least one positive");
  if (k == 0) throw Error(Errc::invalid_argument, "K must be at least 1");
  if (!(percentile > 0.0 && percentile <= 1.0)) throw Error(Errc::invalid_argument, "percentile must lie in (0, 1]");
  if (pos_text.dims() != candidates.dims())
    throw Error(Errc::dimension_mismatch, "positive and candidate embeddings differ in dims");
  const auto n = static_cast<std::size_t>(candidates.rows());
  IndexSet all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (k >= n) return all;

  // Distances per candidate, gathered tile by tile in positive order.
  const auto n_pos = static_cast<std::size_t>(pos_text.rows());
  std::vector<double> score(n, 0.0);
  std::vector<std::vector<double>> dist(n);
  for_each_similarity_tile(candidates, pos_text, [&](Index q0, Index k0, const Eigen::MatrixXd& tile) {
    for (Index r = 0; r < tile.rows(); ++r) {
      auto& d = dist[static_cast<std::size_t>(q0 + r)];
      if (k0 == 0) d.reserve(n_pos);
      for (Index c = 0; c < tile.cols(); ++c) d.push_back(1.0 - tile(r, c));
      if (d.size() == n_pos) {
        score[static_cast<std::size_t>(q0 + r)] = nearest_rank_quantile(d, percentile);
        std::vector<double>().swap(d);
      }
    }
  });

  std::stable_sort(all.begin(), all.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

std::vector<IndexSet> group_negatives(const IndexSet& neg, std::size_t group_size, std::uint64_t seed) {
  if (group_size == 0) throw Error(Errc::invalid_argument, "group size must be at least 1");
  IndexSet shuffled = neg;
  std::mt19937_64 rng(seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::vector<IndexSet> groups;
  for (std::size_t b = 0; b < shuffled.size(); b += group_size) {
    IndexSet g(shuffled.begin() + static_cast<std::ptrdiff_t>(b),
               shuffled.begin() + static_cast<std::ptrdiff_t>(std::min(b + group_size, shuffled.size())));
    std::sort(g.begin(), g.end());
    groups.push_back(std::move(g));
  }
  return groups;
}

IndexSet indices_of_labels(const Corpus& corpus, const LabelList& labels) {
  std::unordered_map<std::string, std::size_t> first;
  for (std::size_t i = 0; i < corpus.size(); ++i) first.emplace(dedup_key(corpus.labels[i]), i);
  IndexSet out;
  for (const auto& label : labels)
    if (auto it = first.find(dedup_key(label)); it != first.end()) out.push_back(it->second);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace oodmine
