#include "lamkit/training.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace lamkit {

namespace {

constexpr Index kEvalBatch = 32;

std::atomic<bool> g_interrupt{false};
static_assert(std::atomic<bool>::is_always_lock_free);

std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

void request_interrupt() noexcept { g_interrupt.store(true); }
void clear_interrupt() noexcept { g_interrupt.store(false); }
bool interrupt_requested() noexcept { return g_interrupt.load(); }

void validate(const TrainConfig& config) {
  if (!(config.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (config.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (config.max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
  if (config.patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (config.weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
  if (!(config.beta1 > 0.0 && config.beta1 < 1.0) || !(config.beta2 > 0.0 && config.beta2 < 1.0)) {
    throw std::invalid_argument("betas must be in (0, 1)");
  }
  if (!(config.eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (config.clip_norm < 0.0) throw std::invalid_argument("clip_norm must be >= 0");
}

OptimizerState OptimizerState::for_parameters(const ParameterStore& store) {
  OptimizerState state;
  for (const auto& [name, t] : store.entries()) {
    state.first_moment.emplace(name, Matrix::Zero(t.rows(), t.cols()));
    state.second_moment.emplace(name, Matrix::Zero(t.rows(), t.cols()));
  }
  return state;
}

void adamw_step(ParameterStore& store, OptimizerState& state, const TrainConfig& config) {
  if (state.first_moment.size() != store.size() || state.second_moment.size() != store.size()) {
    throw std::logic_error("adamw_step: optimizer state not initialized for this parameter store");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  const double lr = config.learning_rate;
  for (auto& [name, param] : store.entries()) {
    auto m_it = state.first_moment.find(name);
    auto v_it = state.second_moment.find(name);
    if (m_it == state.first_moment.end() || v_it == state.second_moment.end()) {
      throw std::logic_error("adamw_step: no optimizer state for " + name);
    }
    const Matrix& g = param.grad();
    if (g.rows() != param.rows() || g.cols() != param.cols()) {
      throw std::logic_error("adamw_step: gradient missing for " + name);
    }
    Matrix& m = m_it->second;
    Matrix& v = v_it->second;
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseAbs2();
    Matrix& theta = param.mutable_value();
    const Matrix step = ((m / correction1).array() / ((v / correction2).array().sqrt() + config.eps)).matrix();
    theta = theta - lr * step - lr * config.weight_decay * theta;
  }
}

double clip_gradients(ParameterStore& store, double max_norm) {
  const double norm = store.grad_norm();
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& [name, t] : store.entries()) t.mutable_grad() *= factor;
  }
  return norm;
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
}

bool EarlyStopping::observe(int epoch, double score) {
  if (best_epoch_ == 0 || score > best_score_) {
    best_epoch_ = epoch;
    best_score_ = score;
    stale_epochs_ = 0;
    return true;
  }
  ++stale_epochs_;
  return false;
}

Predictions predict(const Model& model, const std::vector<Document>& docs) {
  const int classes = model.config.class_count;
  Predictions out;
  const auto n = static_cast<Index>(docs.size());
  out.scores.resize(n, classes);
  out.predictions.resize(n, classes);
  out.labels.resize(n, classes);
  for (Index begin = 0; begin < n; begin += kEvalBatch) {
    const Index end = std::min(n, begin + kEvalBatch);
    std::vector<const Document*> batch;
    for (Index i = begin; i < end; ++i) {
      const Document& doc = docs[static_cast<std::size_t>(i)];
      if (static_cast<int>(doc.labels.size()) != classes) {
        throw std::invalid_argument("class-count mismatch: document '" + doc.id + "' has " +
                                    std::to_string(doc.labels.size()) + " classes, model has " +
                                    std::to_string(classes));
      }
      batch.push_back(&doc);
    }
    const Matrix logits = forward_batch(model.config, model.params, batch).logits.value();
    for (Index r = 0; r < logits.rows(); ++r) {
      const Index row = begin + r;
      for (int c = 0; c < classes; ++c) out.labels(row, c) = batch[static_cast<std::size_t>(r)]->labels[c];
      if (model.config.task_kind == TaskKind::kMultiLabel) {
        for (int c = 0; c < classes; ++c) {
          const double z = logits(r, c);
          out.scores(row, c) = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
          out.predictions(row, c) = out.scores(row, c) >= 0.5 ? 1 : 0;
        }
      } else {
        const double m = logits.row(r).maxCoeff();
        RowVector e = (logits.row(r).array() - m).exp().matrix();
        out.scores.row(row) = e / e.sum();
        Index best = 0;
        logits.row(r).maxCoeff(&best);
        out.predictions.row(row).setZero();
        out.predictions(row, best) = 1;
      }
    }
  }
  return out;
}

SplitMetrics compute_metrics(const Predictions& predictions) {
  if (predictions.labels.rows() == 0) throw UndefinedMetricError("metrics undefined for an empty split");
  SplitMetrics m;
  m.f1 = f1_scores(predictions.predictions, predictions.labels);
  try {
    m.auc = auc_scores(predictions.scores, predictions.labels);
  } catch (const UndefinedMetricError&) {
    m.auc.reset();
  }
  return m;
}

SplitEvaluation evaluate_split(const Model& model, const std::vector<Document>& docs) {
  SplitEvaluation out;
  out.predictions = predict(model, docs);
  out.metrics = compute_metrics(out.predictions);
  return out;
}

TrainResult train(const Corpus& corpus, const ModelConfig& model_config, const TrainConfig& train_config,
                  const EpochCallback& on_epoch) {
  validate(train_config);
  if (corpus.train.empty()) throw TrainingError("train split is empty");
  if (corpus.valid.empty()) throw TrainingError("valid split is empty");
  if (model_config.class_count != corpus.class_count) {
    throw std::invalid_argument("class-count mismatch: model " + std::to_string(model_config.class_count) +
                                " vs corpus " + std::to_string(corpus.class_count));
  }

  Model model = initialize_model(model_config, train_config.seed);
  OptimizerState state = OptimizerState::for_parameters(model.params);
  // Shuffling and dropout share one stream, separate from initialization.
  Rng rng(train_config.seed ^ 0x9e3779b97f4a7c15ULL);
  EarlyStopping stopper(train_config.patience);

  TrainResult result;
  ParameterStore best_params = model.params.clone();
  std::vector<std::size_t> order(corpus.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch_size = static_cast<std::size_t>(train_config.batch_size);
  ForwardOptions options;
  options.train = true;
  options.rng = &rng;

  for (int epoch = 1; epoch <= train_config.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[uniform_index(rng, i)]);
    }
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      if (interrupt_requested()) {
        throw TrainingInterrupted("interrupted at epoch " + std::to_string(epoch));
      }
      const std::size_t end = std::min(order.size(), begin + batch_size);
      std::vector<const Document*> batch;
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&corpus.train[order[i]]);

      model.params.zero_grad();
      BatchTrace trace = forward_batch(model.config, model.params, batch, options);
      if (epoch == 1) result.truncated_tokens += trace.truncated_tokens;
      Tensor loss = classification_loss(trace.logits, label_matrix(batch, model_config.class_count),
                                        model_config.task_kind);
      const double value = loss.scalar();
      if (!std::isfinite(value)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                            std::to_string(batches + 1));
      }
      backward(loss, model.params);
      clip_gradients(model.params, train_config.clip_norm);
      adamw_step(model.params, state, train_config);
      loss_sum += value;
      ++batches;
    }

    const SplitMetrics valid = compute_metrics(predict(model, corpus.valid));
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(batches);
    record.valid_f1_micro = valid.f1.micro;
    record.valid_f1_macro = valid.f1.macro;
    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);

    if (stopper.observe(epoch, valid.f1.micro)) best_params = model.params.clone();
    if (stopper.should_stop()) break;
  }

  result.best = Model{model_config, std::move(best_params)};
  result.best_epoch = stopper.best_epoch();
  result.best_valid_f1_micro = stopper.best_score();
  return result;
}

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
  out << "epoch,train_loss,valid_f1_micro,valid_f1_macro,seconds\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << format_fixed(r.train_loss, 6) << ',' << format_fixed(r.valid_f1_micro, 6)
        << ',' << format_fixed(r.valid_f1_macro, 6) << ',' << format_fixed(r.seconds, 3) << '\n';
  }
}

}  // namespace lamkit
