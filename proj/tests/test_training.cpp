#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "lamkit/training.hpp"
#include "test_util.hpp"

namespace lamkit {
namespace {

using testing::make_document;
using testing::random_matrix;
using testing::tiny_model_config;

ParameterStore one_scalar(double theta, double grad) {
  ParameterStore s;
  Tensor& t = s.add("theta", Matrix::Constant(1, 1, theta));
  t.mutable_grad() = Matrix::Constant(1, 1, grad);
  return s;
}

TEST(AdamW, ClosedFormFirstStep) {
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.0;
  ParameterStore s = one_scalar(0.0, 1.0);
  OptimizerState state = OptimizerState::for_parameters(s);
  adamw_step(s, state, cfg);
  EXPECT_NEAR(s.at("theta").value()(0, 0), -0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(s.at("theta").value()(0, 0), -0.0999999990, 1e-10);
}

TEST(AdamW, DecoupledDecay) {
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.0;
  ParameterStore plain = one_scalar(1.0, 1.0);
  OptimizerState a = OptimizerState::for_parameters(plain);
  adamw_step(plain, a, cfg);
  cfg.weight_decay = 0.01;
  ParameterStore decayed = one_scalar(1.0, 1.0);
  OptimizerState b = OptimizerState::for_parameters(decayed);
  adamw_step(decayed, b, cfg);
  EXPECT_NEAR(decayed.at("theta").value()(0, 0) - plain.at("theta").value()(0, 0), -0.001, 1e-15);
}

TEST(AdamW, ZeroGradientWithoutDecayIsNoOp) {
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  ParameterStore s = one_scalar(0.7, 0.0);
  OptimizerState state = OptimizerState::for_parameters(s);
  adamw_step(s, state, cfg);
  EXPECT_EQ(s.at("theta").value()(0, 0), 0.7);
}

TEST(AdamW, MatchesScalarAdamOracleOverManySteps) {
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.weight_decay = 0.05;
  Rng rng(1);
  ParameterStore s;
  s.add("w", random_matrix(rng, 3, 2));
  OptimizerState state = OptimizerState::for_parameters(s);
  Matrix theta = s.at("w").value();
  Matrix m = Matrix::Zero(3, 2), v = Matrix::Zero(3, 2);
  for (int t = 1; t <= 50; ++t) {
    const Matrix g = random_matrix(rng, 3, 2);
    s.at("w").mutable_grad() = g;
    adamw_step(s, state, cfg);
    for (Index i = 0; i < g.size(); ++i) {
      double& mi = m.data()[i];
      double& vi = v.data()[i];
      const double gi = g.data()[i];
      mi = 0.9 * mi + 0.1 * gi;
      vi = 0.999 * vi + 0.001 * gi * gi;
      const double mhat = mi / (1 - std::pow(0.9, t));
      const double vhat = vi / (1 - std::pow(0.999, t));
      double& th = theta.data()[i];
      th = th - 0.01 * mhat / (std::sqrt(vhat) + 1e-8) - 0.01 * 0.05 * th;
    }
  }
  EXPECT_LE((s.at("w").value() - theta).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AdamW, MissingStateRejected) {
  TrainConfig cfg;
  ParameterStore s = one_scalar(0.0, 1.0);
  OptimizerState empty;
  EXPECT_THROW(adamw_step(s, empty, cfg), std::logic_error);
}

TEST(ClipGradients, RescalesToGlobalNorm) {
  ParameterStore s;
  s.add("a", Matrix::Zero(1, 2)).mutable_grad() = (Matrix(1, 2) << 3, 0).finished();
  s.add("b", Matrix::Zero(1, 1)).mutable_grad() = Matrix::Constant(1, 1, 4);
  EXPECT_NEAR(clip_gradients(s, 1.0), 5.0, 1e-15);
  EXPECT_NEAR(s.grad_norm(), 1.0, 1e-15);
  EXPECT_NEAR(s.at("b").grad()(0, 0), 0.8, 1e-15);
  // Under the limit nothing changes; zero disables clipping.
  EXPECT_NEAR(clip_gradients(s, 2.0), 1.0, 1e-15);
  EXPECT_NEAR(s.at("b").grad()(0, 0), 0.8, 1e-15);
  s.at("b").mutable_grad()(0, 0) = 100;
  clip_gradients(s, 0.0);
  EXPECT_EQ(s.at("b").grad()(0, 0), 100);
}

TEST(EarlyStopping, PatienceDefinition) {
  EarlyStopping es(3);
  const std::vector<double> scores{0.5, 0.4, 0.4, 0.4};
  int stopped_after = 0;
  for (int e = 1; e <= 4; ++e) {
    es.observe(e, scores[static_cast<std::size_t>(e - 1)]);
    if (es.should_stop()) {
      stopped_after = e;
      break;
    }
  }
  EXPECT_EQ(stopped_after, 4);
  EXPECT_EQ(es.best_epoch(), 1);
}

TEST(EarlyStopping, TiesKeepEarlierEpochAndImprovementResets) {
  EarlyStopping es(2);
  EXPECT_TRUE(es.observe(1, 0.0));
  EXPECT_FALSE(es.observe(2, 0.0));
  EXPECT_TRUE(es.observe(3, 0.1));
  EXPECT_FALSE(es.should_stop());
  EXPECT_FALSE(es.observe(4, 0.1));
  EXPECT_FALSE(es.observe(5, 0.05));
  EXPECT_TRUE(es.should_stop());
  EXPECT_EQ(es.best_epoch(), 3);
  EXPECT_THROW(EarlyStopping(0), std::invalid_argument);
}

Corpus small_corpus() {
  SyntheticCorpusSpec spec;
  spec.n_docs = 80;
  spec.len_min = 8;
  spec.len_max = 60;
  return generate_synthetic_corpus(spec);
}

ModelConfig small_model(const Corpus& c) {
  ModelConfig cfg = tiny_model_config(static_cast<Index>(c.vocab.size()), c.class_count);
  return cfg;
}

TEST(Train, LossDecreasesOnSmallCorpus) {
  const Corpus c = small_corpus();
  TrainConfig tc;
  tc.learning_rate = 3e-3;
  tc.max_epochs = 6;
  tc.patience = 6;
  const TrainResult r = train(c, small_model(c), tc);
  ASSERT_EQ(r.history.size(), 6u);
  EXPECT_LT(r.history.back().train_loss, r.history.front().train_loss);
  EXPECT_GE(r.best_epoch, 1);
  for (const auto& e : r.history) {
    EXPECT_GE(e.valid_f1_micro, 0.0);
    EXPECT_LE(e.valid_f1_micro, 1.0);
  }
}

TEST(Train, SameSeedSameHistoryAndCheckpoint) {
  const Corpus c = small_corpus();
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.seed = 9;
  const TrainResult a = train(c, small_model(c), tc);
  const TrainResult b = train(c, small_model(c), tc);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].valid_f1_micro, b.history[i].valid_f1_micro);
  }
  std::stringstream ca, cb;
  save_checkpoint(a.best, ca);
  save_checkpoint(b.best, cb);
  EXPECT_EQ(ca.str(), cb.str());
  tc.seed = 10;
  std::stringstream cc;
  save_checkpoint(train(c, small_model(c), tc).best, cc);
  EXPECT_NE(ca.str(), cc.str());
}

TEST(Train, EpochCallbackAndInterrupt) {
  const Corpus c = small_corpus();
  TrainConfig tc;
  tc.max_epochs = 3;
  tc.patience = 3;
  int calls = 0;
  train(c, small_model(c), tc, [&](const EpochRecord& e) { EXPECT_EQ(e.epoch, ++calls); });
  EXPECT_EQ(calls, 3);
  request_interrupt();
  EXPECT_THROW(train(c, small_model(c), tc), TrainingInterrupted);
  clear_interrupt();
  EXPECT_FALSE(interrupt_requested());
}

TEST(Train, EmptySplitsRejected) {
  Corpus c = small_corpus();
  c.valid.clear();
  EXPECT_THROW(train(c, small_model(c), TrainConfig{}), TrainingError);
}

TEST(Evaluate, SaturatedLogitsGiveHardPredictions) {
  const ModelConfig cfg = tiny_model_config(20, 2);
  Model m = initialize_model(cfg, 1);
  m.params.at(kHeadPrefix + "w2").mutable_value().setZero();
  m.params.at(kHeadPrefix + "b2").mutable_value() << -20, 20;
  Rng rng(2);
  const std::vector<Document> docs{make_document("a", 10, 20, rng, {0, 1}), make_document("b", 30, 20, rng, {1, 1})};
  const Predictions p = predict(m, docs);
  for (Index r = 0; r < 2; ++r) {
    EXPECT_EQ(p.predictions(r, 0), 0);
    EXPECT_EQ(p.predictions(r, 1), 1);
  }
  EXPECT_EQ(p.labels(1, 0), 1);
}

TEST(Evaluate, RepeatableAndEmptyListUndefined) {
  const ModelConfig cfg = tiny_model_config();
  const Model m = initialize_model(cfg, 3);
  Rng rng(4);
  std::vector<Document> docs;
  for (int i = 0; i < 5; ++i) docs.push_back(make_document("d" + std::to_string(i), 5 + 7 * i, 20, rng, {i % 2, 1, 0}));
  const SplitEvaluation a = evaluate_split(m, docs);
  const SplitEvaluation b = evaluate_split(m, docs);
  EXPECT_EQ(a.predictions.scores, b.predictions.scores);
  EXPECT_EQ(a.metrics.f1.micro, b.metrics.f1.micro);
  EXPECT_THROW(evaluate_split(m, {}), UndefinedMetricError);
}

TEST(History, CsvColumns) {
  std::stringstream out;
  write_history_csv(out, {{1, 0.5, 0.25, 0.125, 1.5}});
  std::string header, row;
  std::getline(out, header);
  std::getline(out, row);
  EXPECT_EQ(header, "epoch,train_loss,valid_f1_micro,valid_f1_macro,seconds");
  EXPECT_EQ(row.rfind("1,0.5", 0), 0u) << row;
}

TEST(TrainConfig, Validation) {
  TrainConfig tc;
  EXPECT_NO_THROW(validate(tc));
  tc.learning_rate = 0;
  EXPECT_THROW(validate(tc), std::invalid_argument);
  tc = {};
  tc.beta2 = 1.0;
  EXPECT_THROW(validate(tc), std::invalid_argument);
}

}  // namespace
}  // namespace lamkit
