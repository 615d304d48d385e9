#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

#include <Eigen/Dense>

#include "oodmine/embedding_io.hpp"
#include "oodmine/parallel.hpp"

namespace oodmine {

// Fixed tile sizes for blocked similarity products. Results depend on these
// (through GEMM reduction order) but never on the thread count.
inline constexpr Index kQueryBlockRows = 256;
inline constexpr Index kKeyBlockRows = 4096;

/// Visits the similarity matrix queries x keys tile by tile. For each query
/// block (processed in parallel), key tiles are visited in increasing order and
/// `fn(query_begin, key_begin, tile)` is called with the double-precision tile
/// of dot products. Per-query reductions done inside `fn` are therefore
/// deterministic. `fn` must only write state owned by its query rows.
template <typename Fn>
void for_each_similarity_tile(const EmbeddingMatrix& queries, const EmbeddingMatrix& keys, Fn&& fn) {
  if (queries.dims() != keys.dims())
    throw Error(Errc::dimension_mismatch, "similarity between " + std::to_string(queries.dims()) +
                                              "-d and " + std::to_string(keys.dims()) + "-d embeddings");
  const Index n_q = queries.rows();
  const Index n_k = keys.rows();
  if (n_q == 0 || n_k == 0) return;
  const auto n_blocks = static_cast<std::size_t>((n_q + kQueryBlockRows - 1) / kQueryBlockRows);
  parallel_for_blocks(n_blocks, [&](std::size_t block) {
    const Index q0 = static_cast<Index>(block) * kQueryBlockRows;
    const Index qn = std::min(kQueryBlockRows, n_q - q0);
    const RowMatrixXd q = queries.data().middleRows(q0, qn).template cast<double>();
    for (Index k0 = 0; k0 < n_k; k0 += kKeyBlockRows) {
      const Index kn = std::min(kKeyBlockRows, n_k - k0);
      const RowMatrixXd k = keys.data().middleRows(k0, kn).template cast<double>();
      const Eigen::MatrixXd tile = q * k.transpose();
      fn(q0, k0, tile);
    }
  });
}

/// Streaming log-sum-exp with max shift. Merging partial sums in a fixed order
/// gives a deterministic result.
struct LogSumExp {
  double max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;  // sum of exp(x - max)

  template <typename Derived>
  void add(const Eigen::MatrixBase<Derived>& xs) {
    if (xs.size() == 0) return;
    const double m = xs.maxCoeff();
    const double s = (xs.array() - m).exp().sum();
    merge(m, s);
  }

  void merge(double m, double s) {
    if (m == -std::numeric_limits<double>::infinity()) return;
    if (m > max) {
      sum = sum * std::exp(max - m) + s;
      max = m;
    } else {
      sum += s * std::exp(m - max);
    }
  }

  double value() const { return max + std::log(sum); }
};

}  // namespace oodmine
