#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "lamkit/corpus.hpp"
#include "lamkit/tensor.hpp"

namespace lamkit {

using IdMatrix = MatrixX<std::int32_t>;
using MaskMatrix = MatrixX<bool>;

/// One segmentation kernel: windows of `size` body tokens every `stride`
/// tokens, at most `max_segments` per document.
struct KernelSpec {
  Index size = 128;
  Index stride = 128;
  Index max_segments = 32;
  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

void validate(const KernelSpec& kernel);

/// A document's segments under one kernel. Column 0 of every real segment is
/// CLS; rows past `n_segments` (added by pad_and_batch) are all PAD and fully
/// masked.
struct SegmentBatch {
  KernelSpec kernel;
  IdMatrix segments;    // rows x (size + 1)
  MaskMatrix token_mask;
  Index n_segments = 0;
  Index truncated_tokens = 0;  // tokens past the max_segments cap
};

Index count_segments(Index token_count, const KernelSpec& kernel);

SegmentBatch segment_document(const Document& doc, const KernelSpec& kernel);

/// Pads every batch to the largest segment count among them.
std::vector<SegmentBatch> pad_and_batch(const std::vector<SegmentBatch>& batches);

}  // namespace lamkit
