#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "oodmine/clustering.hpp"
#include "oodmine/corpus.hpp"
#include "oodmine/embedding_io.hpp"

namespace oodmine {

// Sorted, duplicate-free indices into a corpus.
using IndexSet = std::vector<std::size_t>;

enum class MiningMethod { posmine, clustermine, given_gt };

std::string_view to_string(MiningMethod method) noexcept;
MiningMethod parse_mining_method(std::string_view name);

struct MiningParams {
  std::optional<std::size_t> clusters;   // C
  std::optional<std::size_t> min_count;  // M
  std::optional<std::size_t> k;          // K
  std::optional<double> percentile;
};

struct MinedLabelSets {
  IndexSet pos;
  IndexSet neg;
  MiningMethod method = MiningMethod::given_gt;
  MiningParams params;
};

nlohmann::json to_json(const MinedLabelSets& sets);
MinedLabelSets mined_from_json(const nlohmann::json& j);

/// Writes the JSON file plus a `<stem>.labels.txt` dump of the positive label names.
void save_mined(const MinedLabelSets& sets, const Corpus& corpus, const std::filesystem::path& path);
MinedLabelSets load_mined(const std::filesystem::path& path);

struct ZeroShotAssignment {
  std::vector<std::size_t> top1;  // corpus index per image
  std::vector<double> similarity;

  std::size_t size() const noexcept { return top1.size(); }
};

/// Top-1 corpus label per image by cosine; ties go to the lowest index.
ZeroShotAssignment zero_shot_assign(const EmbeddingMatrix& images, const EmbeddingMatrix& text);

/// Labels receiving at least `min_count` zero-shot assignments become positives.
MinedLabelSets posmine(const ZeroShotAssignment& assign, const Corpus& corpus, std::size_t min_count);

struct ClusterMineResult {
  MinedLabelSets sets;
  // Majority zero-shot label of each cluster, nullopt for empty clusters.
  std::vector<std::optional<std::size_t>> cluster_labels;

  std::vector<std::size_t> voted_labels() const;
};

/// Majority vote of zero-shot labels inside each visual cluster.
ClusterMineResult clustermine(const ZeroShotAssignment& assign, const ClusterAssignment& clusters,
                              const Corpus& corpus);

/// corpus \ pos, sorted.
IndexSet complement_negatives(const IndexSet& pos, std::size_t corpus_size);
IndexSet complement_negatives(const IndexSet& pos, const Corpus& corpus);

/// Nearest-rank quantile (`percentile` in (0, 1]) of `values`, which is reordered.
double nearest_rank_quantile(std::vector<double>& values, double percentile);

/// Keeps the `k` candidates whose percentile distance (1 - cos) to the
/// positives is largest, ties broken towards lower indices. Returns sorted
/// candidate row indices; k >= |candidates| keeps everything.
IndexSet negative_mine(const EmbeddingMatrix& pos_text, const EmbeddingMatrix& candidates, std::size_t k,
                       double percentile);

/// Random partition of `neg` into groups of `group_size` (the last may be smaller).
std::vector<IndexSet> group_negatives(const IndexSet& neg, std::size_t group_size, std::uint64_t seed);

/// Corpus indices of `labels`, matched on dedup_key. Unknown labels are skipped.
IndexSet indices_of_labels(const Corpus& corpus, const LabelList& labels);

}  // namespace oodmine
