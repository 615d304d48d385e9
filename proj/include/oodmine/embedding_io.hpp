#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oodmine/error.hpp"

namespace oodmine {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixXf = RowMatrix<float>;
using RowMatrixXd = RowMatrix<double>;
using Index = Eigen::Index;

using LabelList = std::vector<std::string>;

// Rows whose stored norm is within this distance of 1 are kept bit-for-bit.
inline constexpr double kUnitNormKeepTolerance = 1e-6;
// Rows further than this from unit norm are renormalized and counted as warnings.
inline constexpr double kUnitNormWarnTolerance = 1e-4;

/// Rescales every row of `m` to unit L2 norm in place. Norms are accumulated
/// in double regardless of the matrix scalar. Rows already within
/// kUnitNormKeepTolerance are left untouched, which keeps normalization
/// idempotent at the bit level. Returns the number of rows whose norm was off
/// by more than kUnitNormWarnTolerance. Throws Error(zero_norm) on a zero row.
template <typename Derived>
std::size_t normalize_rows(Eigen::MatrixBase<Derived>& m);

/// N x D matrix of unit-norm float rows (image features or text features).
/// Immutable after construction.
class EmbeddingMatrix {
 public:
  /// Validates (finite, non-zero rows, dims >= 2) and renormalizes.
  explicit EmbeddingMatrix(RowMatrixXf data);

  /// A matrix with no rows; used for an empty negative set.
  static EmbeddingMatrix empty(Index dims);

  Index rows() const noexcept { return data_.rows(); }
  Index dims() const noexcept { return data_.cols(); }
  bool is_empty() const noexcept { return data_.rows() == 0; }

  const RowMatrixXf& data() const noexcept { return data_; }
  auto row(Index i) const { return data_.row(i); }

  /// Rows that deviated from unit norm by more than kUnitNormWarnTolerance.
  std::size_t renormalized_rows() const noexcept { return renormalized_; }

  EmbeddingMatrix select_rows(std::span<const std::size_t> indices) const;

 private:
  struct Trusted {};
  EmbeddingMatrix(RowMatrixXf data, Trusted) : data_(std::move(data)) {}

  RowMatrixXf data_;
  std::size_t renormalized_ = 0;
};

EmbeddingMatrix load_embeddings(const std::filesystem::path& path);
void save_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path);

LabelList load_labels(const std::filesystem::path& path);
void save_labels(const LabelList& labels, const std::filesystem::path& path);

/// Entry (i, j) = a_i . b_j, accumulated in double.
Eigen::MatrixXd cosine_sim(const EmbeddingMatrix& a, const EmbeddingMatrix& b);

template <typename Derived>
std::size_t normalize_rows(Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  std::size_t warned = 0;
  for (Index i = 0; i < m.rows(); ++i) {
    const double norm = m.row(i).template cast<double>().norm();
    if (!(norm > 0.0)) throw Error(Errc::zero_norm, "row " + std::to_string(i) + " has zero norm");
    const double deviation = std::abs(norm - 1.0);
    if (deviation <= kUnitNormKeepTolerance) continue;
    if (deviation > kUnitNormWarnTolerance) ++warned;
    m.row(i) = (m.row(i).template cast<double>() / norm).template cast<Scalar>();
  }
  return warned;
}

}  // namespace oodmine
