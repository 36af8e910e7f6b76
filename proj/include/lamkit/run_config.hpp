#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lamkit/experiment.hpp"

namespace lamkit {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key.empty() ? what : "config key '" + key + "': " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

enum class CorpusSource { kSynthetic, kJsonl };

/// Everything a command needs to reproduce a run.
struct RunConfig {
  CorpusSource corpus_source = CorpusSource::kSynthetic;
  std::string corpus_path;
  int class_count = 4;
  TaskKind task_kind = TaskKind::kMultiLabel;
  SyntheticCorpusSpec synthetic;

  std::vector<Index> kernels{8, 16, 32};
  std::vector<Index> strides;  // empty: stride == kernel size
  std::vector<Index> max_segments{32, 16, 8};
  Index d_model = 32;
  Index heads = 2;
  Index d_ff = 64;
  Index segment_layers = 2;
  Index document_layers = 2;
  Index length_layers = 1;
  double dropout = 0.1;
  double classifier_dropout = 0.1;
  Activation activation = Activation::kGelu;

  TrainConfig train;
  std::vector<Variant> variants{kAllVariants.begin(), kAllVariants.end()};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string output_dir = "runs/lamkit";
};

/// Flat object with dotted keys, e.g. "model.kernels", "train.seed".
nlohmann::json to_json(const RunConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Sorted-key, two-space-indented JSON with a trailing newline.
std::string canonical_string(const RunConfig& config);
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Cross-field checks (kernel list lengths, non-empty seeds and variants).
void validate(const RunConfig& config);

/// "key=value" where value is JSON, or a bare string. Call validate() once
/// all overrides are applied.
void apply_override(RunConfig& config, const std::string& assignment);

/// Overrides train.seed from LAMKIT_SEED when it is set.
void apply_seed_environment(RunConfig& config);

ModelConfig model_config_for(const RunConfig& config, Index vocab_size);
std::vector<RawDocument> load_records(const RunConfig& config);
Corpus load_corpus(const RunConfig& config);

}  // namespace lamkit
