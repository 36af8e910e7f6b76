#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "lamkit/experiment.hpp"
#include "lamkit/model.hpp"
#include "test_util.hpp"

namespace lamkit {
namespace {

using testing::make_document;
using testing::random_matrix;
using testing::tiny_model_config;

Matrix rows_of(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (const auto& row : rows) {
    Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

TEST(ModelParameters, CountMatchesStoreForEveryVariant) {
  const ModelConfig base = tiny_model_config();
  for (Variant v : kAllVariants) {
    const ModelConfig cfg = build_ablation(base, v);
    EXPECT_EQ(initialize_model(cfg, 1).params.scalar_count(), model_parameter_count(cfg)) << to_string(v);
  }
}

TEST(ModelParameters, AblationDeltasMatchEncoderFormula) {
  const ModelConfig base = tiny_model_config();
  const std::size_t full = model_parameter_count(base);
  EXPECT_EQ(full - model_parameter_count(build_ablation(base, Variant::kWoLav)),
            encoder_parameter_count(base.length_encoder));
  EXPECT_EQ(full - model_parameter_count(build_ablation(base, Variant::kWoMk)),
            encoder_parameter_count(base.segment_encoder));
  EXPECT_EQ(full - model_parameter_count(build_ablation(base, Variant::kWoBoth)),
            encoder_parameter_count(base.segment_encoder) + encoder_parameter_count(base.length_encoder));
}

TEST(ModelParameters, InitializationIsSeeded) {
  const ModelConfig cfg = tiny_model_config();
  const Model a = initialize_model(cfg, 4);
  const Model b = initialize_model(cfg, 4);
  const Model c = initialize_model(cfg, 5);
  for (const auto& [name, p] : a.params.entries()) EXPECT_EQ(p.value(), b.params.at(name).value()) << name;
  EXPECT_NE(a.params.at(kHeadPrefix + "w1").value(), c.params.at(kHeadPrefix + "w1").value());
}

TEST(ModelConfigJson, RoundTrip) {
  ModelConfig cfg = tiny_model_config();
  cfg.length_aware = false;
  EXPECT_EQ(model_config_from_json(to_json(cfg)), cfg);
}

TEST(Integrate, Examples) {
  const Tensor out = integrate(Tensor(rows_of({{1, 0}})), Tensor(rows_of({{2, 2}})), {0});
  EXPECT_EQ(out.value(), rows_of({{3, 2}}));
  Rng rng(1);
  const Matrix doc = random_matrix(rng, 5, 3);
  EXPECT_EQ(integrate(Tensor(doc), Tensor(Matrix::Zero(2, 3)), {0, 0, 1, 1, 1}).value(), doc);
  EXPECT_THROW(integrate(Tensor(doc), Tensor(Matrix::Zero(2, 3)), {0, 0, 2, 1, 1}), std::out_of_range);
  EXPECT_THROW(integrate(Tensor(doc), Tensor(Matrix::Zero(2, 3)), {0, 0}), ShapeError);
}

TEST(HierarchicalPool, MaxThenMean) {
  const Tensor integrated(rows_of({{1, -2}, {3, 0}, {-1, 4}}));
  EXPECT_EQ(hierarchical_pool(integrated, {{0, 2}, {2, 1}}).value(), rows_of({{1, 2}}));
  const Tensor single(rows_of({{0.5, -7}}));
  EXPECT_EQ(hierarchical_pool(single, {{0, 1}}).value(), single.value());
  EXPECT_THROW(hierarchical_pool(integrated, {{0, 0}}), ShapeError);
}

TEST(HierarchicalPool, GroupsRowsPerDocument) {
  const Tensor integrated(rows_of({{1, -2}, {3, 0}, {-1, 4}, {5, 5}, {1, 1}}));
  const Matrix out = hierarchical_pool(integrated, {{0, 2}, {2, 1}, {3, 1}, {4, 1}}, 2).value();
  EXPECT_EQ(out, rows_of({{1, 2}, {3, 3}}));
}

TEST(Classify, ZeroWeightsGiveSecondBias) {
  const ModelConfig cfg = tiny_model_config();
  Model m = initialize_model(cfg, 1);
  m.params.at(kHeadPrefix + "w1").mutable_value().setZero();
  m.params.at(kHeadPrefix + "w2").mutable_value().setZero();
  m.params.at(kHeadPrefix + "b2").mutable_value() << 0.5, -1.0, 2.0;
  Rng rng(2);
  const Matrix logits = classify(cfg, m.params, Tensor(random_matrix(rng, 1, 8))).value();
  EXPECT_EQ(logits, rows_of({{0.5, -1.0, 2.0}}));
}

TEST(Loss, AnalyticValues) {
  const Tensor uniform(Matrix::Constant(1, 5, 0.3));
  EXPECT_NEAR(classification_loss(uniform, rows_of({{0, 0, 1, 0, 0}}), TaskKind::kSingleLabel).scalar(),
              std::log(5.0), 1e-12);
  const Tensor zeros(Matrix::Zero(2, 3));
  EXPECT_NEAR(classification_loss(zeros, rows_of({{1, 0, 1}, {0, 0, 0}}), TaskKind::kMultiLabel).scalar(),
              std::log(2.0), 1e-12);
  const Tensor confident(rows_of({{20, -20, 20}}));
  EXPECT_LE(classification_loss(confident, rows_of({{1, 0, 1}}), TaskKind::kMultiLabel).scalar(), 1e-8);
  EXPECT_LE(classification_loss(Tensor(rows_of({{40, -40}})), rows_of({{1, 0}}), TaskKind::kSingleLabel).scalar(),
            1e-8);
  EXPECT_THROW(classification_loss(zeros, rows_of({{0.5, 0, 1}, {0, 0, 0}}), TaskKind::kMultiLabel),
               std::invalid_argument);
}

TEST(DocumentEncode, ZeroLayersAndShape) {
  ModelConfig cfg = tiny_model_config(20, 3, 0);
  const Model m = initialize_model(cfg, 1);
  Rng rng(3);
  const Matrix x = random_matrix(rng, 4, 8);
  EXPECT_EQ(document_encode(cfg, m.params, Tensor(x)).value(), x);
  cfg = tiny_model_config();
  const Model m1 = initialize_model(cfg, 1);
  EXPECT_EQ(document_encode(cfg, m1.params, Tensor(random_matrix(rng, 1, 8))).rows(), 1);
}

TEST(Forward, TraceShapesAndChunkCounts) {
  const ModelConfig cfg = tiny_model_config();
  const Model m = initialize_model(cfg, 1);
  Rng rng(4);
  const Document doc = make_document("d", 21, 20, rng, {1, 0, 1});
  const DocumentForwardTrace t = forward_document(cfg, m.params, doc);
  EXPECT_EQ(t.chunk_counts, (std::vector<Index>{6, 3}));
  EXPECT_EQ(t.segment_vectors[0].rows(), 6);
  EXPECT_EQ(t.document_output.rows(), 9);
  EXPECT_EQ(t.length_vectors.rows(), 2);
  EXPECT_EQ(t.pooled.rows(), 1);
  EXPECT_EQ(t.logits.cols(), 3);
}

TEST(Forward, EvalModeDeterministicTrainModeStochastic) {
  ModelConfig cfg = tiny_model_config();
  cfg.segment_encoder.dropout = 0.2;
  cfg.classifier_dropout = 0.2;
  const Model m = initialize_model(cfg, 1);
  Rng rng(5);
  const Document doc = make_document("d", 30, 20, rng, {1, 0, 1});
  const Matrix a = forward_document(cfg, m.params, doc).logits.value();
  EXPECT_EQ(a, forward_document(cfg, m.params, doc).logits.value());
  Rng drop(6);
  EXPECT_NE(a, forward_document(cfg, m.params, doc, {true, &drop}).logits.value());
}

TEST(Forward, BatchMatchesSingleDocuments) {
  const ModelConfig cfg = tiny_model_config();
  const Model m = initialize_model(cfg, 2);
  Rng rng(7);
  std::vector<Document> docs;
  for (Index len : {3, 17, 40, 9}) docs.push_back(make_document("d" + std::to_string(len), len, 20, rng, {0, 1, 0}));
  std::vector<const Document*> ptrs;
  for (const auto& d : docs) ptrs.push_back(&d);
  const Matrix batch = forward_batch(cfg, m.params, ptrs).logits.value();
  for (std::size_t b = 0; b < docs.size(); ++b) {
    const Matrix single = forward_document(cfg, m.params, docs[b]).logits.value();
    EXPECT_LE((batch.row(static_cast<Index>(b)) - single.row(0)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Ablation, WoLavEqualsFullWithLengthPathSilenced) {
  const ModelConfig full_cfg = tiny_model_config();
  const ModelConfig wo_lav_cfg = build_ablation(full_cfg, Variant::kWoLav);
  const Model full = initialize_model(full_cfg, 3);
  ParameterStore shared;
  for (const auto& [name, p] : full.params.entries()) {
    if (name.rfind(kLengthPrefix, 0) != 0) shared.entries().emplace(name, p);
  }
  Rng rng(8);
  for (Index len : {1, 5, 16, 33, 80}) {
    const Document doc = make_document("x", len, 20, rng, {1, 1, 0});
    ForwardOptions probe;
    probe.add_positions = false;
    probe.zero_length_output = true;
    const Matrix a = forward_document(full_cfg, full.params, doc, probe).logits.value();
    const Matrix b = forward_document(wo_lav_cfg, shared, doc).logits.value();
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-12) << "length " << len;
    // Without the probes the length path does change the output.
    EXPECT_GT((forward_document(full_cfg, full.params, doc).logits.value() - b).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Checkpoint, RoundTripIsBitwise) {
  ModelConfig cfg = tiny_model_config();
  cfg.task_kind = TaskKind::kSingleLabel;
  const Model m = initialize_model(cfg, 9);
  std::stringstream buf;
  save_checkpoint(m, buf);
  const Model back = load_checkpoint(buf);
  EXPECT_EQ(back.config, m.config);
  ASSERT_EQ(back.params.size(), m.params.size());
  for (const auto& [name, p] : m.params.entries()) EXPECT_EQ(back.params.at(name).value(), p.value()) << name;
  std::stringstream again;
  save_checkpoint(back, again);
  std::stringstream first;
  save_checkpoint(m, first);
  EXPECT_EQ(again.str(), first.str());
}

class FullModelGradient : public ::testing::TestWithParam<Index> {};

TEST_P(FullModelGradient, EveryParameterMatchesFiniteDifferences) {
  const ModelConfig cfg = tiny_model_config(20, 3, GetParam());
  Model m = initialize_model(cfg, 11);
  Rng rng(12);
  testing::perturb_parameters(m.params, rng);
  const Document doc = make_document("g", 40, 20, rng, {1, 0, 1});
  const Matrix labels = rows_of({{1, 0, 1}});
  const LossFunction fn = [&](const ParameterStore& p) {
    return classification_loss(forward_document(cfg, p, doc).logits, labels, cfg.task_kind);
  };
  const testing::SplitGradCheck r = testing::grad_check_all(fn, m.params);
  EXPECT_EQ(r.checked, model_parameter_count(cfg));
  EXPECT_LE(r.relative, 1e-3) << r.worst_parameter << " " << r.analytic << " vs " << r.numeric;
  EXPECT_LE(r.key_bias_abs, 1e-8);
}

INSTANTIATE_TEST_SUITE_P(Layers, FullModelGradient, ::testing::Values(1, 2));

}  // namespace
}  // namespace lamkit
