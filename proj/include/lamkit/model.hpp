#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lamkit/corpus.hpp"
#include "lamkit/encoder.hpp"
#include "lamkit/segmentation.hpp"

namespace lamkit {

/// Full architecture. `length_aware == false` drops segment positions, length
/// vectors and the length encoder.
struct ModelConfig {
  std::vector<KernelSpec> kernels;
  EncoderConfig segment_encoder;
  EncoderConfig document_encoder;
  EncoderConfig length_encoder;
  int class_count = 2;
  TaskKind task_kind = TaskKind::kMultiLabel;
  double classifier_dropout = 0.1;
  bool length_aware = true;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void validate(const ModelConfig& config);
nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

std::size_t model_parameter_count(const ModelConfig& config);

/// Parameter name prefix of the segment encoder for one kernel.
std::string segment_prefix(const KernelSpec& kernel);
inline const std::string kDocumentPrefix = "document.";
inline const std::string kLengthPrefix = "length.";
inline const std::string kHeadPrefix = "head.";

struct Model {
  ModelConfig config;
  ParameterStore params;
};

Model initialize_model(const ModelConfig& config, std::uint64_t seed);

struct ForwardOptions {
  bool train = false;
  Rng* rng = nullptr;
  // Probes for the ablation equivalence; only meaningful when length_aware.
  bool add_positions = true;
  bool zero_length_output = false;
};

/// Intermediate values for a mini-batch. Rows of the N_total-row matrices are
/// ordered document-major, then kernel, then segment position.
struct BatchTrace {
  std::vector<Tensor> kernel_cls;          // per kernel, all docs' CLS rows
  Tensor segment_vectors;                  // N_total x d, before positions
  Tensor document_output;                  // N_total x d
  Tensor length_vectors;                   // (B*K) x d, empty without LaV
  Tensor length_output;                    // (B*K) x d, empty without LaV
  Tensor integrated;                       // N_total x d
  Tensor pooled;                           // B x d
  Tensor logits;                           // B x C
  std::vector<std::vector<Index>> chunk_counts;  // [doc][kernel]
  Index truncated_tokens = 0;
};

BatchTrace forward_batch(const ModelConfig& config, const ParameterStore& params,
                         std::span<const Document* const> docs, const ForwardOptions& options = {});

/// Single-document view of forward_batch.
struct DocumentForwardTrace {
  std::vector<Tensor> segment_vectors;  // per kernel, n_k x d
  Tensor length_vectors;                // K x d (empty without LaV)
  Tensor document_output;               // N_total x d
  Tensor length_output;                 // K x d (empty without LaV)
  Tensor integrated;                    // N_total x d
  Tensor pooled;                        // 1 x d
  Tensor logits;                        // 1 x C
  std::vector<Index> chunk_counts;
};

DocumentForwardTrace forward_document(const ModelConfig& config, const ParameterStore& params,
                                      const Document& doc, const ForwardOptions& options = {});

/// Document encoder over position-augmented segment vectors of one document.
Tensor document_encode(const ModelConfig& config, const ParameterStore& params,
                       const Tensor& segment_vectors);

/// integrated[r] = doc_out[r] + len_out[len_row_of[r]].
Tensor integrate(const Tensor& doc_out, const Tensor& len_out, const std::vector<Index>& len_row_of);

/// Column max within each kernel range, then mean over consecutive groups of
/// `kernels` pooled rows. One output row per group.
Tensor hierarchical_pool(const Tensor& integrated, const std::vector<RowRange>& kernel_ranges,
                         Index kernels);
Tensor hierarchical_pool(const Tensor& integrated, const std::vector<RowRange>& kernel_ranges);

/// linear -> gelu -> dropout -> linear.
Tensor classify(const ModelConfig& config, const ParameterStore& params, const Tensor& doc_vectors,
                bool train = false, Rng* rng = nullptr);

/// Sigmoid BCE (multi-label) or softmax CE (single-label), averaged over rows.
Tensor classification_loss(const Tensor& logits, const Matrix& labels, TaskKind task_kind);

Matrix label_matrix(std::span<const Document* const> docs, int class_count);

void save_checkpoint(const Model& model, std::ostream& out);
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(std::istream& in);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace lamkit
