#include "oodmine/scoring.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "oodmine/error.hpp"
#include "oodmine/format.hpp"
#include "oodmine/similarity.hpp"

namespace oodmine {
namespace {

void require_positives(const EmbeddingMatrix& images, const EmbeddingMatrix& pos_text) {
  if (pos_text.is_empty()) throw Error(Errc::empty_input, "scoring needs at least one positive label");
  if (images.dims() != pos_text.dims())
    throw Error(Errc::dimension_mismatch, "image and text embeddings differ in dims");
}

// Per-image log-sum-exp of (h . z / tau) over all rows of `text`.
Eigen::VectorXd log_sum_exp_per_image(const EmbeddingMatrix& images, const EmbeddingMatrix& text, double tau) {
  std::vector<LogSumExp> acc(static_cast<std::size_t>(images.rows()));
  for_each_similarity_tile(images, text, [&](Index q0, Index, const Eigen::MatrixXd& tile) {
    for (Index r = 0; r < tile.rows(); ++r) acc[static_cast<std::size_t>(q0 + r)].add(tile.row(r) / tau);
  });
  Eigen::VectorXd out(images.rows());
  for (Index i = 0; i < out.size(); ++i) out(i) = acc[static_cast<std::size_t>(i)].value();
  return out;
}

Eigen::VectorXd max_per_image(const EmbeddingMatrix& images, const EmbeddingMatrix& text) {
  Eigen::VectorXd out = Eigen::VectorXd::Constant(images.rows(), -std::numeric_limits<double>::infinity());
  for_each_similarity_tile(images, text, [&](Index q0, Index, const Eigen::MatrixXd& tile) {
    for (Index r = 0; r < tile.rows(); ++r) out(q0 + r) = std::max(out(q0 + r), tile.row(r).maxCoeff());
  });
  return out;
}

}  // namespace

void ScoreConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw Error(Errc::invalid_argument, "temperature must be positive");
  if (group_size && *group_size == 0) throw Error(Errc::invalid_argument, "group size must be at least 1");
}

Eigen::VectorXd score_posneg(const EmbeddingMatrix& images, const EmbeddingMatrix& pos_text,
                             const EmbeddingMatrix& neg_text, const ScoreConfig& cfg) {
  cfg.validate();
  require_positives(images, pos_text);
  if (neg_text.is_empty()) return Eigen::VectorXd::Ones(images.rows());
  if (images.dims() != neg_text.dims())
    throw Error(Errc::dimension_mismatch, "image and negative text embeddings differ in dims");
  const Eigen::VectorXd lse_pos = log_sum_exp_per_image(images, pos_text, cfg.tau);
  const Eigen::VectorXd lse_neg = log_sum_exp_per_image(images, neg_text, cfg.tau);
  return (1.0 + (lse_neg - lse_pos).array().exp()).inverse().matrix();
}

Eigen::VectorXd score_grouped(const EmbeddingMatrix& images, const EmbeddingMatrix& pos_text,
                              std::span<const EmbeddingMatrix> neg_groups, const ScoreConfig& cfg) {
  if (neg_groups.empty()) throw Error(Errc::empty_input, "grouped scoring needs at least one negative group");
  Eigen::VectorXd total = Eigen::VectorXd::Zero(images.rows());
  for (const auto& group : neg_groups) total += score_posneg(images, pos_text, group, cfg);
  return total / static_cast<double>(neg_groups.size());
}

Eigen::VectorXd score_mcm(const EmbeddingMatrix& images, const EmbeddingMatrix& pos_text, const ScoreConfig& cfg) {
  cfg.validate();
  require_positives(images, pos_text);
  const Eigen::VectorXd lse = log_sum_exp_per_image(images, pos_text, cfg.tau);
  const Eigen::VectorXd top = max_per_image(images, pos_text) / cfg.tau;
  return (top - lse).array().exp().min(1.0).matrix();
}

Eigen::VectorXd score_maxlogit(const EmbeddingMatrix& images, const EmbeddingMatrix& pos_text) {
  require_positives(images, pos_text);
  return max_per_image(images, pos_text);
}

Eigen::VectorXd score_energy(const EmbeddingMatrix& images, const EmbeddingMatrix& pos_text,
                             const ScoreConfig& cfg) {
  cfg.validate();
  require_positives(images, pos_text);
  return cfg.tau * log_sum_exp_per_image(images, pos_text, cfg.tau);
}

void write_scores_csv(std::ostream& out, const Eigen::VectorXd& scores) {
  out << "index,score\n";
  for (Index i = 0; i < scores.size(); ++i) out << i << ',' << format_double(scores(i)) << '\n';
}

void save_scores(const Eigen::VectorXd& scores, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  write_scores_csv(out, scores);
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

std::vector<double> read_scores_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "index,score") throw Error(Errc::parse, "score CSV must start with 'index,score'");
  std::vector<double> scores;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    std::size_t index = 0;
    double value = 0.0;
    bool ok = comma != std::string::npos;
    if (ok) {
      auto r1 = std::from_chars(line.data(), line.data() + comma, index);
      auto r2 = std::from_chars(line.data() + comma + 1, line.data() + line.size(), value);
      ok = r1.ec == std::errc() && r1.ptr == line.data() + comma && r2.ec == std::errc() &&
           r2.ptr == line.data() + line.size() && index == scores.size() && std::isfinite(value);
    }
    if (!ok) throw Error(Errc::parse, "score CSV line " + std::to_string(line_no) + ": '" + line + "'");
    scores.push_back(value);
  }
  if (scores.empty()) throw Error(Errc::empty_input, "score CSV has no rows");
  return scores;
}

std::vector<double> load_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  try {
    return read_scores_csv(in);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace oodmine
