#include "lamkit/segmentation.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace lamkit {

void validate(const KernelSpec& kernel) {
  if (kernel.size < 1 || kernel.stride < 1 || kernel.stride > kernel.size) {
    throw std::invalid_argument("kernel needs 1 <= stride <= size, got size " +
                                std::to_string(kernel.size) + " stride " + std::to_string(kernel.stride));
  }
  if (kernel.max_segments < 1) throw std::invalid_argument("kernel max_segments must be >= 1");
}

Index count_segments(Index token_count, const KernelSpec& kernel) {
  validate(kernel);
  if (token_count < 1) throw std::invalid_argument("count_segments: token count must be >= 1");
  const Index m = kernel.size;
  const Index s = kernel.stride;
  const Index n = token_count <= m ? 1 : 1 + (token_count - m + s - 1) / s;
  return std::min(kernel.max_segments, n);
}

SegmentBatch segment_document(const Document& doc, const KernelSpec& kernel) {
  const auto t = static_cast<Index>(doc.tokens.size());
  if (t < 1) throw EmptyDocumentError("segment_document: document '" + doc.id + "' is empty");
  const Index n = count_segments(t, kernel);
  const Index width = kernel.size + 1;

  SegmentBatch out;
  out.kernel = kernel;
  out.n_segments = n;
  out.segments = IdMatrix::Constant(n, width, kPadId);
  out.token_mask = MaskMatrix::Constant(n, width, false);
  Index covered = 0;
  for (Index row = 0; row < n; ++row) {
    out.segments(row, 0) = kClsId;
    out.token_mask(row, 0) = true;
    const Index start = row * kernel.stride;
    const Index stop = std::min(t, start + kernel.size);
    for (Index pos = start; pos < stop; ++pos) {
      out.segments(row, 1 + pos - start) = doc.tokens[static_cast<std::size_t>(pos)];
      out.token_mask(row, 1 + pos - start) = true;
    }
    covered = std::max(covered, stop);
  }
  out.truncated_tokens = t - covered;
  return out;
}

std::vector<SegmentBatch> pad_and_batch(const std::vector<SegmentBatch>& batches) {
  if (batches.empty()) return {};
  Index widest = 0;
  for (const auto& b : batches) {
    if (!(b.kernel == batches.front().kernel)) {
      throw std::invalid_argument("pad_and_batch: documents segmented with different kernels");
    }
    widest = std::max(widest, static_cast<Index>(b.segments.rows()));
  }
  std::vector<SegmentBatch> out;
  out.reserve(batches.size());
  for (const auto& b : batches) {
    SegmentBatch padded = b;
    const Index have = b.segments.rows();
    if (have < widest) {
      const Index width = b.segments.cols();
      padded.segments.conservativeResize(widest, width);
      padded.token_mask.conservativeResize(widest, width);
      padded.segments.bottomRows(widest - have).setConstant(kPadId);
      padded.token_mask.bottomRows(widest - have).setConstant(false);
    }
    out.push_back(std::move(padded));
  }
  return out;
}

}  // namespace lamkit
