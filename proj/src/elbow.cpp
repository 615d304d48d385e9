#include "oodmine/clustering.hpp"
#include "oodmine/error.hpp"
#include "oodmine/format.hpp"
#include "oodmine/mining.hpp"

namespace oodmine {

std::vector<ElbowRow> elbow_sweep(const EmbeddingMatrix& features, const EmbeddingMatrix& text, const Corpus& corpus,
                                  std::span<const std::size_t> cluster_counts, const KMeansOptions& options) {
  if (cluster_counts.empty()) throw Error(Errc::invalid_argument, "elbow sweep needs at least one cluster count");
  for (auto c : cluster_counts)
    if (c == 0 || c > static_cast<std::size_t>(features.rows()))
      throw Error(Errc::invalid_argument, "cluster count " + std::to_string(c) + " outside [1, N]");
  if (static_cast<std::size_t>(text.rows()) != corpus.size())
    throw Error(Errc::dimension_mismatch, "text embeddings and corpus differ in length");

  const ZeroShotAssignment zs = zero_shot_assign(features, text);
  std::vector<ElbowRow> rows;
  for (auto c : cluster_counts) {
    const ClusterAssignment clusters = spherical_kmeans(features, c, options);
    const ClusterMineResult mined = clustermine(zs, clusters, corpus);
    ElbowRow row;
    row.clusters = c;
    row.n_pos = mined.sets.pos.size();
    row.ratio = static_cast<double>(row.n_pos) / static_cast<double>(c);
    row.redundancy = redundancy_ratio(mined.voted_labels());
    rows.push_back(row);
  }
  return rows;
}

void write_elbow_csv(std::ostream& out, std::span<const ElbowRow> rows) {
  out << "C,n_pos,ratio,redundancy\n";
  for (const auto& r : rows)
    out << r.clusters << ',' << r.n_pos << ',' << format_double(r.ratio) << ',' << format_double(r.redundancy)
        << '\n';
}

}  // namespace oodmine
