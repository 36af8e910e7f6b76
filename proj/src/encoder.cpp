#include "lamkit/encoder.hpp"

#include <stdexcept>

#include "lamkit/lav.hpp"

namespace lamkit {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kNormEps = 1e-5;

std::string layer_prefix(const std::string& prefix, Index layer) {
  return prefix + "layer" + std::to_string(layer) + ".";
}

Matrix normal_matrix(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, kInitStd);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Tensor maybe_dropout(const Tensor& x, const EncoderConfig& config, const EncoderRun& run) {
  if (!run.train || config.dropout == 0.0) return x;
  if (run.rng == nullptr) throw std::invalid_argument("encoder: training run needs an RNG");
  return dropout(x, config.dropout, *run.rng);
}

Tensor run_stack(const ParameterStore& store, const std::string& prefix, const EncoderConfig& config,
                 Tensor h, const std::vector<bool>& mask, const SequenceLayout& layout,
                 const EncoderRun& run) {
  if (static_cast<Index>(mask.size()) != h.rows()) {
    throw ShapeError("encoder: mask length " + std::to_string(mask.size()) + " != rows " +
                     std::to_string(h.rows()));
  }
  if (h.cols() != config.d_model) {
    throw ShapeError("encoder: input width " + std::to_string(h.cols()) + " != d_model " +
                     std::to_string(config.d_model));
  }
  for (Index l = 0; l < config.layers; ++l) {
    const std::string p = layer_prefix(prefix, l);
    const AttentionWeights w{store.at(p + "attn.wq"), store.at(p + "attn.bq"),
                             store.at(p + "attn.wk"), store.at(p + "attn.bk"),
                             store.at(p + "attn.wv"), store.at(p + "attn.bv"),
                             store.at(p + "attn.wo"), store.at(p + "attn.bo")};
    Tensor normed = layer_norm(h, store.at(p + "ln1.gain"), store.at(p + "ln1.bias"), kNormEps);
    Tensor attn = multi_head_attention(normed, w, config.heads, mask, layout);
    h = add(h, maybe_dropout(attn, config, run));

    normed = layer_norm(h, store.at(p + "ln2.gain"), store.at(p + "ln2.bias"), kNormEps);
    Tensor ff = linear(normed, store.at(p + "ff.w1"), store.at(p + "ff.b1"));
    ff = activation(ff, config.activation);
    ff = linear(ff, store.at(p + "ff.w2"), store.at(p + "ff.b2"));
    h = add(h, maybe_dropout(ff, config, run));
  }
  // The final norm belongs to the stack; a zero-layer stack is the identity.
  if (config.layers > 0) {
    h = layer_norm(h, store.at(prefix + "final_norm.gain"), store.at(prefix + "final_norm.bias"),
                   kNormEps);
  }
  return h;
}

}  // namespace

void validate(const EncoderConfig& config) {
  if (config.layers < 0) throw std::invalid_argument("encoder layers must be >= 0");
  if (config.d_model < 1 || config.heads < 1 || config.d_model % config.heads != 0) {
    throw std::invalid_argument("encoder d_model " + std::to_string(config.d_model) +
                                " must be divisible by heads " + std::to_string(config.heads));
  }
  if (config.d_ff < 1) throw std::invalid_argument("encoder d_ff must be >= 1");
  if (config.dropout < 0.0 || config.dropout >= 1.0) {
    throw std::invalid_argument("encoder dropout must be in [0, 1)");
  }
  if (config.vocab_size < 0) throw std::invalid_argument("encoder vocab_size must be >= 0");
}

std::size_t encoder_parameter_count(const EncoderConfig& config) {
  const auto d = static_cast<std::size_t>(config.d_model);
  const auto ff = static_cast<std::size_t>(config.d_ff);
  const auto layers = static_cast<std::size_t>(config.layers);
  const auto vocab = static_cast<std::size_t>(config.vocab_size);
  return vocab * d + layers * (4 * d * d + 4 * d + 2 * d * ff + d + ff + 4 * d) + 2 * d;
}

void init_encoder(ParameterStore& store, const std::string& prefix, const EncoderConfig& config,
                  Rng& rng) {
  validate(config);
  const Index d = config.d_model;
  if (config.vocab_size > 0) store.add(prefix + "embedding", normal_matrix(config.vocab_size, d, rng));
  for (Index l = 0; l < config.layers; ++l) {
    const std::string p = layer_prefix(prefix, l);
    for (const char* proj : {"q", "k", "v", "o"}) {
      store.add(p + "attn.w" + proj, normal_matrix(d, d, rng));
      store.add(p + "attn.b" + proj, Matrix::Zero(1, d));
    }
    store.add(p + "ln1.gain", Matrix::Ones(1, d));
    store.add(p + "ln1.bias", Matrix::Zero(1, d));
    store.add(p + "ff.w1", normal_matrix(d, config.d_ff, rng));
    store.add(p + "ff.b1", Matrix::Zero(1, config.d_ff));
    store.add(p + "ff.w2", normal_matrix(config.d_ff, d, rng));
    store.add(p + "ff.b2", Matrix::Zero(1, d));
    store.add(p + "ln2.gain", Matrix::Ones(1, d));
    store.add(p + "ln2.bias", Matrix::Zero(1, d));
  }
  store.add(prefix + "final_norm.gain", Matrix::Ones(1, d));
  store.add(prefix + "final_norm.bias", Matrix::Zero(1, d));
}

Tensor encoder_forward(const ParameterStore& store, const std::string& prefix,
                       const EncoderConfig& config, const std::vector<int>& ids,
                       const std::vector<bool>& mask, const SequenceLayout& layout,
                       const EncoderRun& run) {
  if (config.vocab_size < 1) throw std::invalid_argument("encoder: id input needs a token embedding");
  std::vector<Index> rows(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= config.vocab_size) {
      throw ShapeError("encoder: token id " + std::to_string(ids[i]) + " outside vocabulary of " +
                       std::to_string(config.vocab_size));
    }
    rows[i] = ids[i];
  }
  Index longest = 0;
  for (const RowRange& blk : layout) longest = std::max(longest, blk.length);
  const PositionEmbeddingTable table(longest, config.d_model);
  Matrix positions(static_cast<Index>(ids.size()), config.d_model);
  for (const RowRange& blk : layout) {
    if (blk.end() > positions.rows()) throw ShapeError("encoder: layout exceeds input rows");
    positions.middleRows(blk.begin, blk.length) = table.values().topRows(blk.length);
  }
  Tensor embedded = add(gather_rows(store.at(prefix + "embedding"), rows), Tensor(std::move(positions)));
  return run_stack(store, prefix, config, std::move(embedded), mask, layout, run);
}

Tensor encoder_forward(const ParameterStore& store, const std::string& prefix,
                       const EncoderConfig& config, const Tensor& input,
                       const std::vector<bool>& mask, const SequenceLayout& layout,
                       const EncoderRun& run) {
  return run_stack(store, prefix, config, input, mask, layout, run);
}

Tensor extract_cls(const Tensor& encoded, const SequenceLayout& layout) {
  std::vector<Index> rows;
  rows.reserve(layout.size());
  for (const RowRange& blk : layout) rows.push_back(blk.begin);
  return gather_rows(encoded, rows);
}

Tensor extract_cls(const std::vector<Tensor>& segment_outputs) {
  if (segment_outputs.empty()) throw ShapeError("extract_cls: no segments");
  SequenceLayout layout;
  Index at = 0;
  for (const Tensor& s : segment_outputs) {
    if (s.rows() < 1) throw ShapeError("extract_cls: empty segment output");
    layout.push_back({at, s.rows()});
    at += s.rows();
  }
  return extract_cls(concat_rows(segment_outputs), layout);
}

}  // namespace lamkit
