#pragma once

#include <utility>
#include <vector>

#include "lamkit/random.hpp"
#include "lamkit/tensor.hpp"

namespace lamkit {

/// Contiguous row range [begin, begin + length).
struct RowRange {
  Index begin = 0;
  Index length = 0;
  Index end() const { return begin + length; }
  friend bool operator==(const RowRange&, const RowRange&) = default;
};

/// Partition of a stacked matrix into independent sequences. Attention never
/// crosses a block boundary.
using SequenceLayout = std::vector<RowRange>;

SequenceLayout single_sequence(Index rows);
SequenceLayout uniform_blocks(Index blocks, Index block_rows);

enum class Activation { kRelu, kGelu };

// Elementwise and linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// Adds a 1 x cols row to every row of `a`.
Tensor add_row(const Tensor& a, const Tensor& row);
/// x * weight + bias, with bias a 1 x out row.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor activation(const Tensor& x, Activation kind);

/// Inverted dropout. Identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng);

// Row selection and reduction.
Tensor gather_rows(const Tensor& x, const std::vector<Index>& rows);
Tensor concat_rows(const std::vector<Tensor>& parts);
/// Column-wise max of each range; one output row per range.
Tensor range_max(const Tensor& x, const std::vector<RowRange>& ranges);
/// Column-wise mean of each range; one output row per range.
Tensor range_mean(const Tensor& x, const std::vector<RowRange>& ranges);

/// Scaled dot-product attention over pre-projected q, k, v (rows x d_model),
/// split into `heads` column groups and into independent sequences by
/// `layout`. Keys with mask == false get logit -1e30; outputs of masked
/// queries are zero.
Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, Index heads,
                      const SequenceLayout& layout, const std::vector<bool>& mask);

struct AttentionWeights {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

Tensor multi_head_attention(const Tensor& x, const AttentionWeights& w, Index heads,
                            const std::vector<bool>& mask);
Tensor multi_head_attention(const Tensor& x, const AttentionWeights& w, Index heads,
                            const std::vector<bool>& mask, const SequenceLayout& layout);

/// Mean over rows of softmax cross-entropy; targets are one-hot rows.
Tensor softmax_cross_entropy(const Tensor& logits, const Matrix& targets);
/// Mean over rows of (mean over columns of) sigmoid binary cross-entropy.
Tensor sigmoid_binary_cross_entropy(const Tensor& logits, const Matrix& targets);

double gelu_value(double x);

}  // namespace lamkit
