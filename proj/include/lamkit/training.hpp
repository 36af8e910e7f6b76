#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lamkit/metrics.hpp"
#include "lamkit/model.hpp"

namespace lamkit {

struct TrainConfig {
  double learning_rate = 3e-4;
  Index batch_size = 16;
  int max_epochs = 20;
  int patience = 3;
  double weight_decay = 0.01;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // 0 disables clipping
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void validate(const TrainConfig& config);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingInterrupted : public TrainingError {
 public:
  using TrainingError::TrainingError;
};

/// Async-signal-safe. A running train() throws TrainingInterrupted at the
/// next batch boundary.
void request_interrupt() noexcept;
void clear_interrupt() noexcept;
bool interrupt_requested() noexcept;

/// AdamW moments, one pair per parameter name.
struct OptimizerState {
  std::map<std::string, Matrix> first_moment;
  std::map<std::string, Matrix> second_moment;
  long step = 0;

  static OptimizerState for_parameters(const ParameterStore& store);
};

/// One decoupled-weight-decay Adam update from the gradients held in `store`:
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta
void adamw_step(ParameterStore& store, OptimizerState& state, const TrainConfig& config);

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_gradients(ParameterStore& store, double max_norm);

/// Tracks the best validation score; ties keep the earlier epoch.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);

  /// Returns true when `score` improves on the best so far.
  bool observe(int epoch, double score);
  bool should_stop() const { return stale_epochs_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_score() const { return best_score_; }

 private:
  int patience_;
  int stale_epochs_ = 0;
  int best_epoch_ = 0;
  double best_score_ = -1.0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_f1_micro = 0.0;
  double valid_f1_macro = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  Model best;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_valid_f1_micro = 0.0;
  Index truncated_tokens = 0;  // summed over the first epoch's batches
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const Corpus& corpus, const ModelConfig& model_config, const TrainConfig& train_config,
                  const EpochCallback& on_epoch = {});

struct Predictions {
  Matrix scores;             // sigmoid or softmax probabilities
  LabelMatrix predictions;   // hard 0/1
  LabelMatrix labels;
};

/// Eval-mode forward over `docs` in their given order.
Predictions predict(const Model& model, const std::vector<Document>& docs);

struct SplitMetrics {
  F1Scores f1;
  std::optional<AucScores> auc;  // empty when AUC is undefined for the split
};

SplitMetrics compute_metrics(const Predictions& predictions);

struct SplitEvaluation {
  Predictions predictions;
  SplitMetrics metrics;
};

/// Throws UndefinedMetricError for an empty document list.
SplitEvaluation evaluate_split(const Model& model, const std::vector<Document>& docs);

/// The seconds column is wall-clock time; every other column is reproducible.
void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history);

}  // namespace lamkit
