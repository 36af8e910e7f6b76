#pragma once

#include <cmath>
#include <vector>

#include "lamkit/tensor.hpp"

namespace lamkit {

/// Sinusoidal embedding of one position:
///   PE(pos, i) = sin(pos / 10000^(2i/|d|))  for even i
///   PE(pos, i) = cos(pos / 10000^(2i/|d|))  for odd i
/// The exponent uses the entry's own index i, not the pair index i/2.
template <typename Scalar = double>
RowVectorX<Scalar> sinusoidal_pe(Index pos, Index d_model) {
  if (pos < 0 || d_model < 1) throw ShapeError("sinusoidal_pe: need pos >= 0 and d_model >= 1");
  RowVectorX<Scalar> row(d_model);
  const Scalar p = static_cast<Scalar>(pos);
  for (Index i = 0; i < d_model; ++i) {
    const Scalar denom = std::pow(Scalar(10000), Scalar(2 * i) / static_cast<Scalar>(d_model));
    row(i) = (i % 2 == 0) ? std::sin(p / denom) : std::cos(p / denom);
  }
  return row;
}

/// Rows first_pos .. first_pos + count - 1 of the sinusoidal table.
class PositionEmbeddingTable {
 public:
  PositionEmbeddingTable(Index count, Index d_model, Index first_pos = 0);

  Index max_pos() const { return first_pos_ + values_.rows(); }
  Index d_model() const { return values_.cols(); }
  Index first_pos() const { return first_pos_; }
  const Matrix& values() const { return values_; }
  auto row(Index pos) const { return values_.row(pos - first_pos_); }

 private:
  Index first_pos_;
  Matrix values_;
};

/// Adds PE(1), PE(2), ... to consecutive rows (1-based segment positions).
Tensor add_segment_positions(const Tensor& segment_vectors);

struct LengthVectors {
  Tensor vectors;                   // K x d_model, one row per kernel
  std::vector<Index> chunk_counts;  // n_k per kernel
};

/// Row k = column mean of kernel k's segment vectors + PE(n_k).
LengthVectors compute_length_vectors(const std::vector<Tensor>& segment_vectors,
                                     const std::vector<Index>& chunk_counts, Index d_model);

}  // namespace lamkit
