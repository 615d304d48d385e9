#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <span>

#include <Eigen/Dense>

#include "oodmine/embedding_io.hpp"

namespace oodmine {

struct ScoreConfig {
  // Softmax temperature. The default assumes a pretraining temperature of 0.01
  // divided by ten; pass the model's own value when known.
  double tau = 1e-3;
  std::optional<std::size_t> group_size;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Positive/negative softmax score
///   S(x) = sum_pos exp(h.z / tau) / (sum_pos exp(h.z / tau) + sum_neg exp(h.z / tau)),
/// evaluated as 1 / (1 + exp(lse_neg - lse_pos)). With no negatives S is exactly 1.
Eigen::VectorXd score_posneg(const EmbeddingMatrix& images, const EmbeddingMatrix& pos_text,
                             const EmbeddingMatrix& neg_text, const ScoreConfig& cfg);

/// Mean of score_posneg over the negative groups.
Eigen::VectorXd score_grouped(const EmbeddingMatrix& images, const EmbeddingMatrix& pos_text,
                              std::span<const EmbeddingMatrix> neg_groups, const ScoreConfig& cfg);

/// Maximum softmax probability over the positive labels.
Eigen::VectorXd score_mcm(const EmbeddingMatrix& images, const EmbeddingMatrix& pos_text, const ScoreConfig& cfg);

/// Largest cosine to any positive label.
Eigen::VectorXd score_maxlogit(const EmbeddingMatrix& images, const EmbeddingMatrix& pos_text);

/// tau * log sum_k exp(h.z_k / tau).
Eigen::VectorXd score_energy(const EmbeddingMatrix& images, const EmbeddingMatrix& pos_text, const ScoreConfig& cfg);

/// CSV `index,score` with 17 significant digits.
void write_scores_csv(std::ostream& out, const Eigen::VectorXd& scores);
void save_scores(const Eigen::VectorXd& scores, const std::filesystem::path& path);
std::vector<double> read_scores_csv(std::istream& in);
std::vector<double> load_scores(const std::filesystem::path& path);

}  // namespace oodmine
