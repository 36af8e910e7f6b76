#pragma once

#include <string>
#include <vector>

#include "lamkit/ops.hpp"
#include "lamkit/tensor.hpp"

namespace lamkit {

/// A pre-norm Transformer encoder stack. vocab_size == 0 means the encoder
/// consumes pre-built vectors and owns no token embedding.
struct EncoderConfig {
  Index layers = 2;
  Index heads = 2;
  Index d_model = 32;
  Index d_ff = 64;
  double dropout = 0.1;
  Index vocab_size = 0;
  Activation activation = Activation::kGelu;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

void validate(const EncoderConfig& config);

/// vocab*d + layers*(4d^2 + 4d + 2*d*d_ff + d + d_ff + 4d) + 2d.
std::size_t encoder_parameter_count(const EncoderConfig& config);

/// Adds "<prefix>embedding", "<prefix>layer<l>.*" and "<prefix>final_norm.*".
void init_encoder(ParameterStore& store, const std::string& prefix, const EncoderConfig& config,
                  Rng& rng);

struct EncoderRun {
  bool train = false;
  Rng* rng = nullptr;  // required when train && dropout > 0
};

/// Token ids (one per row) -> token embedding + per-block sinusoidal
/// position (0 at each block start) -> encoder stack.
Tensor encoder_forward(const ParameterStore& store, const std::string& prefix,
                       const EncoderConfig& config, const std::vector<int>& ids,
                       const std::vector<bool>& mask, const SequenceLayout& layout,
                       const EncoderRun& run = {});

/// Vector rows -> encoder stack. No position embedding is added.
Tensor encoder_forward(const ParameterStore& store, const std::string& prefix,
                       const EncoderConfig& config, const Tensor& input,
                       const std::vector<bool>& mask, const SequenceLayout& layout,
                       const EncoderRun& run = {});

/// Row 0 of every block, stacked in block order.
Tensor extract_cls(const Tensor& encoded, const SequenceLayout& layout);
Tensor extract_cls(const std::vector<Tensor>& segment_outputs);

}  // namespace lamkit
