#include <cmath>

#include <gtest/gtest.h>

#include "lamkit/encoder.hpp"
#include "lamkit/gradcheck.hpp"
#include "lamkit/lav.hpp"
#include "test_util.hpp"

namespace lamkit {
namespace {

using testing::random_matrix;

TEST(SinusoidalPe, PositionZeroAlternatesZeroOne) {
  for (Index d : {1, 2, 3, 4, 8, 32}) {
    const RowVector pe = sinusoidal_pe(0, d);
    for (Index i = 0; i < d; ++i) EXPECT_EQ(pe(i), i % 2 == 0 ? 0.0 : 1.0);
  }
}

TEST(SinusoidalPe, DirectEvaluation) {
  EXPECT_NEAR(sinusoidal_pe(1, 4)(0), std::sin(1.0), 1e-15);
  EXPECT_NEAR(sinusoidal_pe(1, 4)(0), 0.841471, 1e-6);
  // Odd entry i = 1 uses exponent 2 * 1 / |d|.
  EXPECT_NEAR(sinusoidal_pe(2, 4)(1), std::cos(2.0 / std::pow(10000.0, 0.5)), 1e-15);
  EXPECT_NEAR(sinusoidal_pe(2, 4)(1), 0.999800, 1e-6);
  EXPECT_NEAR(sinusoidal_pe(7, 6)(4), std::sin(7.0 / std::pow(10000.0, 8.0 / 6.0)), 1e-15);
}

TEST(SinusoidalPe, BoundedAndFloatInstantiation) {
  for (Index pos = 0; pos < 300; pos += 7) {
    EXPECT_LE(sinusoidal_pe(pos, 16).cwiseAbs().maxCoeff(), 1.0);
  }
  const RowVectorX<float> f = sinusoidal_pe<float>(3, 4);
  EXPECT_NEAR(f(0), std::sin(3.0f), 1e-6f);
  EXPECT_THROW(sinusoidal_pe(-1, 4), ShapeError);
  EXPECT_THROW(sinusoidal_pe(1, 0), ShapeError);
}

TEST(PositionTable, RowsArePureFunctionsOfPosition) {
  const PositionEmbeddingTable t(5, 6, 1);
  EXPECT_EQ(t.max_pos(), 6);
  for (Index p = 1; p <= 5; ++p) EXPECT_EQ(RowVector(t.row(p)), sinusoidal_pe(p, 6));
}

TEST(SegmentPositions, Examples) {
  EXPECT_EQ(add_segment_positions(Tensor(Matrix::Zero(1, 4))).value(), Matrix(sinusoidal_pe(1, 4)));
  Rng rng(3);
  const Matrix x = random_matrix(rng, 5, 4);
  const Matrix y = add_segment_positions(Tensor(x)).value();
  for (Index j = 0; j < 5; ++j) {
    EXPECT_LE((y.row(j) - x.row(j) - sinusoidal_pe(j + 1, 4)).cwiseAbs().maxCoeff(), 1e-12);
  }
  // Each kernel restarts at position 1.
  const Matrix a = add_segment_positions(Tensor(Matrix::Zero(2, 4))).value();
  const Matrix b = add_segment_positions(Tensor(Matrix::Zero(2, 4))).value();
  EXPECT_EQ(a.row(0), b.row(0));
}

TEST(LengthVectors, HandComputation) {
  Matrix v(2, 2);
  v << 1, 1, 3, 3;
  const LengthVectors lv = compute_length_vectors({Tensor(v)}, {2}, 2);
  // With |d| = 2 the odd entry is cos(2 / 10000^(2/2)).
  EXPECT_NEAR(lv.vectors.value()(0, 0), 2.0 + std::sin(2.0), 1e-12);
  EXPECT_NEAR(lv.vectors.value()(0, 1), 2.0 + std::cos(2.0 / 10000.0), 1e-12);
  EXPECT_NEAR(lv.vectors.value()(0, 0), 2.909297, 1e-5);
  EXPECT_NEAR(lv.vectors.value()(0, 1), 2.99999998, 1e-8);
}

TEST(LengthVectors, ZeroVectorsAndCardinality) {
  const LengthVectors one = compute_length_vectors({Tensor(Matrix::Zero(1, 4))}, {1}, 4);
  EXPECT_EQ(one.vectors.value(), Matrix(sinusoidal_pe(1, 4)));
  const LengthVectors three = compute_length_vectors(
      {Tensor(Matrix::Zero(3, 4)), Tensor(Matrix::Zero(2, 4)), Tensor(Matrix::Zero(1, 4))}, {3, 2, 1}, 4);
  EXPECT_EQ(three.vectors.rows(), 3);
  EXPECT_EQ(three.chunk_counts, (std::vector<Index>{3, 2, 1}));
  EXPECT_THROW(compute_length_vectors({Tensor(Matrix::Zero(2, 4))}, {3}, 4), ShapeError);
}

TEST(LengthVectors, DifferentCountsGiveDifferentVectors) {
  // Same mean, different chunk counts.
  const LengthVectors a = compute_length_vectors({Tensor(Matrix::Ones(2, 8))}, {2}, 8);
  const LengthVectors b = compute_length_vectors({Tensor(Matrix::Ones(3, 8))}, {3}, 8);
  EXPECT_GT((a.vectors.value() - b.vectors.value()).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(EncoderConfig, ParameterCountMatchesStore) {
  for (Index layers : {0, 1, 3}) {
    for (Index vocab : {0, 17}) {
      const EncoderConfig cfg{layers, 2, 8, 12, 0.1, vocab, Activation::kGelu};
      ParameterStore store;
      Rng rng(1);
      init_encoder(store, "e.", cfg, rng);
      EXPECT_EQ(store.scalar_count(), encoder_parameter_count(cfg));
    }
  }
  EXPECT_THROW(validate(EncoderConfig{1, 3, 8, 8, 0.1, 0, Activation::kGelu}), std::invalid_argument);
  EXPECT_THROW(validate(EncoderConfig{1, 2, 8, 8, 1.0, 0, Activation::kGelu}), std::invalid_argument);
}

TEST(Encoder, ZeroLayersIsIdentity) {
  const EncoderConfig cfg{0, 2, 4, 8, 0.0, 0, Activation::kGelu};
  ParameterStore store;
  Rng rng(2);
  init_encoder(store, "", cfg, rng);
  const Matrix x = random_matrix(rng, 3, 4);
  EXPECT_EQ(encoder_forward(store, "", cfg, Tensor(x), {true, true, true}, single_sequence(3)).value(), x);
}

TEST(Encoder, EvalModeIsDeterministic) {
  const EncoderConfig cfg{2, 2, 8, 16, 0.3, 30, Activation::kGelu};
  ParameterStore store;
  Rng rng(4);
  init_encoder(store, "", cfg, rng);
  const std::vector<int> ids{2, 5, 9, 11, 2, 7, 8, 0};
  const std::vector<bool> mask{true, true, true, true, true, true, true, false};
  const auto layout = uniform_blocks(2, 4);
  const Matrix a = encoder_forward(store, "", cfg, ids, mask, layout).value();
  const Matrix b = encoder_forward(store, "", cfg, ids, mask, layout).value();
  EXPECT_EQ(a, b);
  Rng drop(9);
  const Matrix c = encoder_forward(store, "", cfg, ids, mask, layout, {true, &drop}).value();
  EXPECT_NE(a, c);
}

// Straight-line 1-layer, 1-head block: pre-norm attention and feed-forward
// with residuals, then the final norm. Written with scalar loops only.
Matrix hand_rolled_block(const ParameterStore& s, const Matrix& x) {
  const Index n = x.rows();
  const Index d = x.cols();
  auto norm = [&](const Matrix& in, const std::string& name) {
    Matrix out(n, d);
    for (Index r = 0; r < n; ++r) {
      double mu = 0.0;
      for (Index j = 0; j < d; ++j) mu += in(r, j);
      mu /= static_cast<double>(d);
      double var = 0.0;
      for (Index j = 0; j < d; ++j) var += (in(r, j) - mu) * (in(r, j) - mu);
      var /= static_cast<double>(d);
      for (Index j = 0; j < d; ++j) {
        out(r, j) = (in(r, j) - mu) / std::sqrt(var + 1e-5) * s.at(name + ".gain").value()(0, j) +
                    s.at(name + ".bias").value()(0, j);
      }
    }
    return out;
  };
  auto affine = [&](const Matrix& in, const std::string& w, const std::string& b) {
    const Matrix& W = s.at(w).value();
    Matrix out(in.rows(), W.cols());
    for (Index r = 0; r < in.rows(); ++r) {
      for (Index j = 0; j < W.cols(); ++j) {
        double acc = s.at(b).value()(0, j);
        for (Index t = 0; t < in.cols(); ++t) acc += in(r, t) * W(t, j);
        out(r, j) = acc;
      }
    }
    return out;
  };
  const Matrix a = norm(x, "layer0.ln1");
  const Matrix q = affine(a, "layer0.attn.wq", "layer0.attn.bq");
  const Matrix k = affine(a, "layer0.attn.wk", "layer0.attn.bk");
  const Matrix v = affine(a, "layer0.attn.wv", "layer0.attn.bv");
  Matrix ctx = Matrix::Zero(n, d);
  for (Index i = 0; i < n; ++i) {
    std::vector<double> w(static_cast<std::size_t>(n));
    double z = 0.0;
    for (Index j = 0; j < n; ++j) {
      double dot = 0.0;
      for (Index t = 0; t < d; ++t) dot += q(i, t) * k(j, t);
      w[static_cast<std::size_t>(j)] = std::exp(dot / std::sqrt(static_cast<double>(d)));
      z += w[static_cast<std::size_t>(j)];
    }
    for (Index j = 0; j < n; ++j) {
      for (Index t = 0; t < d; ++t) ctx(i, t) += w[static_cast<std::size_t>(j)] / z * v(j, t);
    }
  }
  Matrix h = x + affine(ctx, "layer0.attn.wo", "layer0.attn.bo");
  Matrix hidden = affine(norm(h, "layer0.ln2"), "layer0.ff.w1", "layer0.ff.b1");
  for (Index i = 0; i < hidden.size(); ++i) {
    const double u = hidden.data()[i];
    hidden.data()[i] = 0.5 * u * (1.0 + std::erf(u / std::sqrt(2.0)));
  }
  h += affine(hidden, "layer0.ff.w2", "layer0.ff.b2");
  return norm(h, "final_norm");
}

TEST(Encoder, MatchesStraightLineOracle) {
  const EncoderConfig cfg{1, 1, 4, 6, 0.0, 0, Activation::kGelu};
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    ParameterStore store;
    init_encoder(store, "", cfg, rng);
    // Perturb away from the neutral initialization so every path matters.
    for (auto& [name, p] : store.entries()) p.mutable_value() += random_matrix(rng, p.rows(), p.cols(), -0.5, 0.5);
    const Matrix x = random_matrix(rng, 2, 4);
    const Matrix fast = encoder_forward(store, "", cfg, Tensor(x), {true, true}, single_sequence(2)).value();
    EXPECT_LE((fast - hand_rolled_block(store, x)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Encoder, MaskedRowsDoNotInfluenceUnmaskedRows) {
  const EncoderConfig cfg{2, 2, 8, 16, 0.0, 0, Activation::kGelu};
  ParameterStore store;
  Rng rng(6);
  init_encoder(store, "", cfg, rng);
  Matrix x = random_matrix(rng, 5, 8);
  const std::vector<bool> mask{true, true, false, true, false};
  const Matrix before = encoder_forward(store, "", cfg, Tensor(x), mask, single_sequence(5)).value();
  x.row(2).setConstant(50.0);
  x.row(4) = random_matrix(rng, 1, 8, -9.0, 9.0);
  const Matrix after = encoder_forward(store, "", cfg, Tensor(x), mask, single_sequence(5)).value();
  for (Index r : {0, 1, 3}) EXPECT_LE((before.row(r) - after.row(r)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Encoder, TokenPositionsRestartPerBlock) {
  const EncoderConfig cfg{1, 2, 8, 16, 0.0, 12, Activation::kGelu};
  ParameterStore store;
  Rng rng(7);
  init_encoder(store, "", cfg, rng);
  const std::vector<int> ids{2, 5, 6, 2, 5, 6};
  const Matrix out = encoder_forward(store, "", cfg, ids, std::vector<bool>(6, true), uniform_blocks(2, 3)).value();
  EXPECT_LE((out.topRows(3) - out.bottomRows(3)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Encoder, SingleLayerGradientsMatchFiniteDifferences) {
  const EncoderConfig cfg{1, 2, 8, 16, 0.0, 0, Activation::kGelu};
  ParameterStore store;
  Rng rng(8);
  init_encoder(store, "", cfg, rng);
  for (auto& [name, p] : store.entries()) p.mutable_value() += random_matrix(rng, p.rows(), p.cols(), -0.3, 0.3);
  store.add("input", random_matrix(rng, 4, 8));
  // The key bias shifts every logit of a query row equally, so its gradient is
  // exactly zero and a finite difference only measures rounding. Hold it fixed.
  const Tensor bk = store.at("layer0.attn.bk");
  store.entries().erase("layer0.attn.bk");
  const Matrix w = random_matrix(rng, 4, 8);
  const LossFunction fn = [&](const ParameterStore& p) {
    ParameterStore full = p;
    full.entries().emplace("layer0.attn.bk", bk);
    return sum(mul(encoder_forward(full, "", cfg, p.at("input"), {true, true, true, false}, single_sequence(4)),
                   Tensor(w)));
  };
  const GradCheckResult r = finite_diff_check(fn, store);
  EXPECT_LE(r.max_relative_error, 1e-3) << r.worst_parameter << "[" << r.worst_index << "] " << r.analytic << " vs " << r.numeric;
}

TEST(ExtractCls, SelectionAndEquivariance) {
  Rng rng(9);
  const std::vector<Tensor> segs{Tensor(random_matrix(rng, 3, 4)), Tensor(random_matrix(rng, 2, 4)),
                                 Tensor(random_matrix(rng, 4, 4))};
  const Matrix cls = extract_cls(segs).value();
  ASSERT_EQ(cls.rows(), 3);
  for (Index k = 0; k < 3; ++k) EXPECT_EQ(cls.row(k), segs[static_cast<std::size_t>(k)].value().row(0));
  EXPECT_EQ(extract_cls({segs[1]}).rows(), 1);
  const Matrix permuted = extract_cls({segs[2], segs[0], segs[1]}).value();
  EXPECT_EQ(permuted.row(0), cls.row(2));
  EXPECT_EQ(permuted.row(1), cls.row(0));
  EXPECT_EQ(permuted.row(2), cls.row(1));
}

}  // namespace
}  // namespace lamkit
