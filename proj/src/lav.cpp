#include "lamkit/lav.hpp"

#include "lamkit/ops.hpp"

namespace lamkit {

PositionEmbeddingTable::PositionEmbeddingTable(Index count, Index d_model, Index first_pos)
    : first_pos_(first_pos), values_(count, d_model) {
  for (Index r = 0; r < count; ++r) values_.row(r) = sinusoidal_pe(first_pos + r, d_model);
}

Tensor add_segment_positions(const Tensor& segment_vectors) {
  if (segment_vectors.rows() < 1) throw ShapeError("add_segment_positions: no segments");
  PositionEmbeddingTable table(segment_vectors.rows(), segment_vectors.cols(), 1);
  return add(segment_vectors, Tensor(table.values()));
}

LengthVectors compute_length_vectors(const std::vector<Tensor>& segment_vectors,
                                     const std::vector<Index>& chunk_counts, Index d_model) {
  if (segment_vectors.size() != chunk_counts.size()) {
    throw ShapeError("compute_length_vectors: " + std::to_string(segment_vectors.size()) +
                     " kernels but " + std::to_string(chunk_counts.size()) + " chunk counts");
  }
  if (segment_vectors.empty()) throw ShapeError("compute_length_vectors: no kernels");
  std::vector<RowRange> ranges;
  Matrix positions(static_cast<Index>(chunk_counts.size()), d_model);
  Index at = 0;
  for (std::size_t k = 0; k < segment_vectors.size(); ++k) {
    const Tensor& v = segment_vectors[k];
    if (v.rows() != chunk_counts[k] || v.cols() != d_model) {
      throw ShapeError("compute_length_vectors: kernel " + std::to_string(k) + " has " +
                       shape_string(v.rows(), v.cols()) + " vectors for count " +
                       std::to_string(chunk_counts[k]));
    }
    ranges.push_back({at, v.rows()});
    positions.row(static_cast<Index>(k)) = sinusoidal_pe(chunk_counts[k], d_model);
    at += v.rows();
  }
  Tensor means = range_mean(concat_rows(segment_vectors), ranges);
  return {add(means, Tensor(std::move(positions))), chunk_counts};
}

}  // namespace lamkit
