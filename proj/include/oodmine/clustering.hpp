#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "oodmine/corpus.hpp"
#include "oodmine/embedding_io.hpp"

namespace oodmine {

struct ClusterAssignment {
  std::vector<std::uint32_t> assignment;  // one cluster index per sample
  std::size_t num_clusters = 0;
  std::optional<EmbeddingMatrix> centroids;
  std::uint64_t seed = 0;
  std::size_t iterations_run = 0;
  // Mean cosine of each sample to its centroid, one entry per assignment step.
  std::vector<double> objective_history;

  std::size_t size() const noexcept { return assignment.size(); }
  std::vector<std::size_t> cluster_sizes() const;
};

struct KMeansOptions {
  std::size_t max_iter = 100;
  double tol = 1e-4;  // on max (1 - cos(old centroid, new centroid))
  std::uint64_t seed = 0;
};

/// Lloyd iterations on the unit sphere with cosine similarity, seeded by
/// k-means++ on the 1 - cos distance. Empty clusters are reseeded with the
/// sample that currently has the lowest cosine to its own centroid.
ClusterAssignment spherical_kmeans(const EmbeddingMatrix& features, std::size_t clusters,
                                   const KMeansOptions& options = {});

/// One non-negative cluster index per line; C = 1 + max index.
ClusterAssignment parse_assignments(std::istream& in, std::size_t expected_samples);
ClusterAssignment import_assignments(const std::filesystem::path& path, std::size_t expected_samples);
void export_assignments(const ClusterAssignment& assign, const std::filesystem::path& path);

struct PurityReport {
  std::vector<std::optional<double>> per_cluster;  // nullopt for empty clusters
  double weighted_mean = 0.0;                      // weighted by cluster size
};

/// Fraction of each cluster carrying its majority reference label.
PurityReport cluster_purity(const ClusterAssignment& assign, std::span<const std::size_t> ref_labels);

/// Shannon entropy (nats) of the label distribution inside each non-empty cluster.
std::vector<std::optional<double>> cluster_entropy(const ClusterAssignment& assign,
                                                   std::span<const std::size_t> mined_labels);

/// Fraction of distinct labels that label more than one cluster.
double redundancy_ratio(std::span<const std::size_t> cluster_labels);

struct ElbowRow {
  std::size_t clusters = 0;
  std::size_t n_pos = 0;
  double ratio = 0.0;  // n_pos / clusters
  double redundancy = 0.0;
};

/// Runs clustering plus ClusterMine at every requested C.
std::vector<ElbowRow> elbow_sweep(const EmbeddingMatrix& features, const EmbeddingMatrix& text, const Corpus& corpus,
                                  std::span<const std::size_t> cluster_counts, const KMeansOptions& options = {});

/// CSV with header `C,n_pos,ratio,redundancy`.
void write_elbow_csv(std::ostream& out, std::span<const ElbowRow> rows);

}  // namespace oodmine
