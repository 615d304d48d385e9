#include "oodmine/clustering.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <string>

#include "oodmine/error.hpp"
#include "oodmine/parallel.hpp"

namespace oodmine {
namespace {

struct AssignStep {
  std::vector<std::uint32_t> best;
  std::vector<double> cosine;
};

constexpr Index kSampleBlock = 1024;

std::size_t sample_blocks(Index n) { return static_cast<std::size_t>((n + kSampleBlock - 1) / kSampleBlock); }

// Nearest centroid for every sample; ties go to the lower cluster index.
AssignStep assign_to_centroids(const EmbeddingMatrix& features, const RowMatrixXd& centers) {
  const Index n = features.rows();
  AssignStep step{std::vector<std::uint32_t>(static_cast<std::size_t>(n), 0),
                  std::vector<double>(static_cast<std::size_t>(n), 0.0)};
  parallel_for_blocks(sample_blocks(n), [&](std::size_t block) {
    const Index b0 = static_cast<Index>(block) * kSampleBlock;
    const Index bn = std::min(kSampleBlock, n - b0);
    const Eigen::MatrixXd sims = features.data().middleRows(b0, bn).cast<double>() * centers.transpose();
    for (Index r = 0; r < bn; ++r) {
      Index best = 0;
      for (Index c = 1; c < sims.cols(); ++c)
        if (sims(r, c) > sims(r, best)) best = c;
      step.best[static_cast<std::size_t>(b0 + r)] = static_cast<std::uint32_t>(best);
      step.cosine[static_cast<std::size_t>(b0 + r)] = sims(r, best);
    }
  });
  return step;
}

EmbeddingMatrix centroids_from_rows(const RowMatrixXd& rows) {
  return EmbeddingMatrix(rows.cast<float>());
}

// Moves the worst-fitting sample of a multi-member cluster into each empty
// cluster and makes it that cluster's centroid.
void repair_empty_clusters(const EmbeddingMatrix& features, AssignStep& step, RowMatrixXd& centroids) {
  const auto k = static_cast<std::size_t>(centroids.rows());
  std::vector<std::size_t> sizes(k, 0);
  for (auto c : step.best) ++sizes[c];
  for (std::size_t e = 0; e < k; ++e) {
    if (sizes[e] != 0) continue;
    std::size_t worst = step.best.size();
    double worst_cos = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < step.best.size(); ++i) {
      if (sizes[step.best[i]] > 1 && step.cosine[i] < worst_cos) {
        worst_cos = step.cosine[i];
        worst = i;
      }
    }
    if (worst == step.best.size()) break;  // fewer distinct samples than clusters
    --sizes[step.best[worst]];
    ++sizes[e];
    step.best[worst] = static_cast<std::uint32_t>(e);
    step.cosine[worst] = 1.0;
    centroids.row(static_cast<Index>(e)) = features.row(static_cast<Index>(worst)).cast<double>();
  }
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

RowMatrixXd kmeanspp_seed(const EmbeddingMatrix& features, std::size_t k, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(features.rows());
  RowMatrixXd centers(static_cast<Index>(k), features.dims());
  std::vector<char> chosen(n, 0);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());

  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  for (std::size_t c = 0; c < k; ++c) {
    chosen[pick] = 1;
    centers.row(static_cast<Index>(c)) = features.row(static_cast<Index>(pick)).cast<double>();
    if (c + 1 == k) break;

    const Eigen::VectorXd center = centers.row(static_cast<Index>(c)).transpose();
    parallel_for_blocks(sample_blocks(features.rows()), [&](std::size_t block) {
      const Index b0 = static_cast<Index>(block) * kSampleBlock;
      const Index bn = std::min(kSampleBlock, features.rows() - b0);
      const Eigen::VectorXd cos = features.data().middleRows(b0, bn).cast<double>() * center;
      for (Index r = 0; r < bn; ++r) {
        const auto i = static_cast<std::size_t>(b0 + r);
        dist[i] = chosen[i] ? 0.0 : std::min(dist[i], std::max(0.0, 1.0 - cos(r)));
      }
    });
    double total = 0.0;
    for (double d : dist) total += d;
    if (total > 0.0) {
      double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      pick = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (dist[i] <= 0.0) continue;
        pick = i;
        target -= dist[i];
        if (target < 0.0) break;
      }
    } else {
      // Every remaining sample coincides with a chosen center.
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) rest.push_back(i);
      pick = rest[std::uniform_int_distribution<std::size_t>(0, rest.size() - 1)(rng)];
    }
  }
  return centers;
}

void check_labels(const ClusterAssignment& assign, std::span<const std::size_t> labels) {
  if (labels.size() != assign.size())
    throw Error(Errc::dimension_mismatch, std::to_string(labels.size()) + " labels for " +
                                              std::to_string(assign.size()) + " assigned samples");
}

// Per-cluster histogram of labels, ordered by label id.
std::vector<std::map<std::size_t, std::size_t>> label_histograms(const ClusterAssignment& assign,
                                                                 std::span<const std::size_t> labels) {
  std::vector<std::map<std::size_t, std::size_t>> hist(assign.num_clusters);
  for (std::size_t i = 0; i < assign.size(); ++i) ++hist[assign.assignment[i]][labels[i]];
  return hist;
}

}  // namespace

std::vector<std::size_t> ClusterAssignment::cluster_sizes() const {
  std::vector<std::size_t> sizes(num_clusters, 0);
  for (auto c : assignment) ++sizes[c];
  return sizes;
}

ClusterAssignment spherical_kmeans(const EmbeddingMatrix& features, std::size_t clusters,
                                   const KMeansOptions& options) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (clusters == 0) throw Error(Errc::invalid_argument, "number of clusters must be positive");
  if (clusters > n)
    throw Error(Errc::invalid_argument, std::to_string(clusters) + " clusters requested for " +
                                            std::to_string(n) + " samples");
  if (options.max_iter == 0) throw Error(Errc::invalid_argument, "max_iter must be at least 1");
  if (!(options.tol >= 0.0)) throw Error(Errc::invalid_argument, "tol must be non-negative");

  std::mt19937_64 rng(options.seed);
  RowMatrixXd centers = kmeanspp_seed(features, clusters, rng);

  ClusterAssignment result;
  result.num_clusters = clusters;
  result.seed = options.seed;

  AssignStep step;
  for (std::size_t it = 0; it < options.max_iter; ++it) {
    step = assign_to_centroids(features, centers);
    repair_empty_clusters(features, step, centers);
    result.objective_history.push_back(mean_of(step.cosine));

    RowMatrixXd sums = RowMatrixXd::Zero(centers.rows(), centers.cols());
    for (std::size_t i = 0; i < n; ++i)
      sums.row(step.best[i]) += features.row(static_cast<Index>(i)).cast<double>();
    double movement = 0.0;
    for (Index c = 0; c < sums.rows(); ++c) {
      const double norm = sums.row(c).norm();
      if (norm < 1e-12) continue;  // members cancel out; keep the previous centroid
      const Eigen::RowVectorXd updated = sums.row(c) / norm;
      movement = std::max(movement, 1.0 - updated.dot(centers.row(c)));
      centers.row(c) = updated;
    }
    result.iterations_run = it + 1;
    if (movement <= options.tol) break;
  }

  // Final assignment against the final centroids.
  step = assign_to_centroids(features, centers);
  repair_empty_clusters(features, step, centers);
  result.objective_history.push_back(mean_of(step.cosine));
  result.assignment = std::move(step.best);
  result.centroids = centroids_from_rows(centers);
  return result;
}

ClusterAssignment parse_assignments(std::istream& in, std::size_t expected_samples) {
  ClusterAssignment out;
  std::string line;
  std::size_t line_no = 0;
  std::uint32_t max_index = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    std::uint32_t value = 0;
    auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), value);
    if (ec != std::errc() || ptr != line.data() + line.size() || line.empty())
      throw Error(Errc::parse, "line " + std::to_string(line_no) + ": '" + line +
                                   "' is not a non-negative cluster index");
    max_index = std::max(max_index, value);
    out.assignment.push_back(value);
  }
  if (out.assignment.size() != expected_samples)
    throw Error(Errc::dimension_mismatch, "assignment has " + std::to_string(out.assignment.size()) +
                                              " entries, expected " + std::to_string(expected_samples));
  out.num_clusters = out.assignment.empty() ? 0 : static_cast<std::size_t>(max_index) + 1;
  return out;
}

ClusterAssignment import_assignments(const std::filesystem::path& path, std::size_t expected_samples) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  return parse_assignments(in, expected_samples);
}

void export_assignments(const ClusterAssignment& assign, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  for (auto c : assign.assignment) out << c << '\n';
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

PurityReport cluster_purity(const ClusterAssignment& assign, std::span<const std::size_t> ref_labels) {
  check_labels(assign, ref_labels);
  PurityReport report;
  std::size_t majority_total = 0;
  std::size_t samples = 0;
  for (const auto& hist : label_histograms(assign, ref_labels)) {
    std::size_t size = 0;
    std::size_t majority = 0;
    for (const auto& [label, count] : hist) {
      size += count;
      majority = std::max(majority, count);
    }
    if (size == 0) {
      report.per_cluster.emplace_back();
      continue;
    }
    report.per_cluster.emplace_back(static_cast<double>(majority) / static_cast<double>(size));
    majority_total += majority;
    samples += size;
  }
  report.weighted_mean = samples == 0 ? 0.0 : static_cast<double>(majority_total) / static_cast<double>(samples);
  return report;
}

std::vector<std::optional<double>> cluster_entropy(const ClusterAssignment& assign,
                                                   std::span<const std::size_t> mined_labels) {
  check_labels(assign, mined_labels);
  std::vector<std::optional<double>> out;
  for (const auto& hist : label_histograms(assign, mined_labels)) {
    std::size_t size = 0;
    for (const auto& [label, count] : hist) size += count;
    if (size == 0) {
      out.emplace_back();
      continue;
    }
    double h = 0.0;
    for (const auto& [label, count] : hist) {
      const double p = static_cast<double>(count) / static_cast<double>(size);
      h -= p * std::log(p);
    }
    out.emplace_back(h == 0.0 ? 0.0 : h);
  }
  return out;
}

double redundancy_ratio(std::span<const std::size_t> cluster_labels) {
  if (cluster_labels.empty()) throw Error(Errc::empty_input, "redundancy ratio needs at least one cluster label");
  std::map<std::size_t, std::size_t> uses;
  for (auto label : cluster_labels) ++uses[label];
  std::size_t multi = 0;
  for (const auto& [label, count] : uses)
    if (count > 1) ++multi;
  return static_cast<double>(multi) / static_cast<double>(uses.size());
}

}  // namespace oodmine
