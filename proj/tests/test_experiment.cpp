#include <algorithm>
#include <sstream>

#include <gtest/gtest.h>

#include "lamkit/experiment.hpp"
#include "test_util.hpp"

namespace lamkit {
namespace {

using testing::make_document;
using testing::tiny_model_config;

std::vector<Document> docs_with_lengths(const std::vector<Index>& lengths) {
  Rng rng(1);
  std::vector<Document> docs;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    docs.push_back(make_document("doc" + std::to_string(i), lengths[i], 30, rng, {1, 0}));
  }
  return docs;
}

std::vector<Index> lengths_of(const Quarter& q) {
  std::vector<Index> out;
  for (const auto& d : q.docs) out.push_back(static_cast<Index>(d.token_count()));
  return out;
}

TEST(QuarterSplit, LengthsOneToEight) {
  const QuarterSplit qs = quarter_split(docs_with_lengths({5, 3, 8, 1, 7, 2, 6, 4}));
  EXPECT_EQ(lengths_of(qs.quarters[0]), (std::vector<Index>{1, 2}));
  EXPECT_EQ(lengths_of(qs.quarters[1]), (std::vector<Index>{3, 4}));
  EXPECT_EQ(lengths_of(qs.quarters[2]), (std::vector<Index>{5, 6}));
  EXPECT_EQ(lengths_of(qs.quarters[3]), (std::vector<Index>{7, 8}));
  EXPECT_EQ(qs.quantiles, (std::array<Index, 3>{2, 4, 6}));
  EXPECT_EQ(qs.quarters[2].min_length, 5);
  EXPECT_EQ(qs.quarters[2].max_length, 6);
}

TEST(QuarterSplit, RemainderGoesToEarlierGroups) {
  const QuarterSplit qs = quarter_split(docs_with_lengths({1, 2, 3, 4, 5, 6, 7, 8, 9}));
  std::vector<std::size_t> sizes;
  for (const auto& q : qs.quarters) sizes.push_back(q.docs.size());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 2, 2, 2}));
}

TEST(QuarterSplit, EqualLengthsBrokenById) {
  std::vector<Document> docs = docs_with_lengths(std::vector<Index>(10, 4));
  std::reverse(docs.begin(), docs.end());
  const QuarterSplit qs = quarter_split(docs);
  EXPECT_EQ(qs.quarters[0].docs.front().id, "doc0");
  EXPECT_EQ(qs.quarters[3].docs.back().id, "doc9");
  EXPECT_EQ(qs.quarters[0].docs.size(), 3u);
  EXPECT_EQ(qs.quarters[3].docs.size(), 2u);
}

TEST(QuarterSplit, PartitionProperty) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const Index n = testing::random_int(rng, 4, 60);
    std::vector<Index> lengths;
    for (Index i = 0; i < n; ++i) lengths.push_back(testing::random_int(rng, 1, 20));
    const QuarterSplit qs = quarter_split(docs_with_lengths(lengths));
    std::size_t total = 0, smallest = SIZE_MAX, largest = 0;
    Index previous_max = 0;
    for (const auto& q : qs.quarters) {
      total += q.docs.size();
      smallest = std::min(smallest, q.docs.size());
      largest = std::max(largest, q.docs.size());
      EXPECT_GE(q.min_length, previous_max);
      previous_max = q.max_length;
    }
    EXPECT_EQ(total, static_cast<std::size_t>(n));
    EXPECT_LE(largest - smallest, 1u);
  }
  EXPECT_THROW(quarter_split(docs_with_lengths({1, 2, 3})), std::invalid_argument);
}

TEST(CorpusStats, MatchesSortOracle) {
  const CorpusStats s = corpus_stats(docs_with_lengths({5, 3, 8, 1, 7, 2, 6, 4}), 2);
  EXPECT_EQ(s.q25, 2);
  EXPECT_EQ(s.q50, 4);
  EXPECT_EQ(s.q75, 6);
  EXPECT_DOUBLE_EQ(s.mean_length, 4.5);
  EXPECT_EQ(s.size, 8u);
  EXPECT_EQ(s.labels, 1);
  EXPECT_THROW(corpus_stats({}, 2), std::invalid_argument);
}

TEST(BuildAblation, Variants) {
  ModelConfig base = tiny_model_config();
  base.kernels = {{4, 4, 8}, {16, 16, 2}, {8, 8, 4}};
  const ModelConfig wo_mk = build_ablation(base, Variant::kWoMk);
  ASSERT_EQ(wo_mk.kernels.size(), 1u);
  EXPECT_EQ(wo_mk.kernels[0].size, 16);
  EXPECT_TRUE(wo_mk.length_aware);
  EXPECT_FALSE(build_ablation(base, Variant::kWoLav).length_aware);
  EXPECT_EQ(build_ablation(base, Variant::kFull), base);
  ModelConfig single = base;
  single.kernels = {{8, 8, 4}};
  EXPECT_EQ(build_ablation(single, Variant::kWoBoth), build_ablation(single, Variant::kWoLav));
  base.kernels.clear();
  EXPECT_THROW(build_ablation(base, Variant::kWoMk), std::invalid_argument);
}

TEST(Variant, NamesRoundTrip) {
  for (Variant v : kAllVariants) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_EQ(to_string(Variant::kWoBoth), "wo_both");
  EXPECT_THROW(parse_variant("nope"), std::invalid_argument);
}

MetricRow row(const std::string& variant, std::uint64_t seed, int quarter, double f1) {
  MetricRow r;
  r.variant = variant;
  r.seed = seed;
  r.split = "test";
  r.quarter = quarter;
  r.f1_micro = f1;
  r.f1_macro = f1 / 2;
  r.auc_micro = f1;
  r.auc_macro = f1;
  return r;
}

TEST(MeanRows, AveragesPerVariantAndQuarter) {
  std::vector<EvaluationReport> reports(3);
  reports[0].rows = {row("full", 1, 0, 0.1), row("full", 1, 1, 0.3)};
  reports[1].rows = {row("full", 2, 0, 0.2), row("full", 2, 1, 0.6)};
  reports[2].rows = {row("wo_mk", 1, 0, 0.7)};
  reports[2].rows[0].auc_macro.reset();
  const auto means = mean_rows(reports);
  ASSERT_EQ(means.size(), 3u);
  EXPECT_FALSE(means[0].seed.has_value());
  EXPECT_NEAR(means[0].f1_micro, 0.15, 1e-12);
  EXPECT_NEAR(means[1].f1_micro, 0.45, 1e-12);
  EXPECT_NEAR(means[1].f1_macro, 0.225, 1e-12);
  // One seed: the mean is that seed's value; undefined AUC stays undefined.
  EXPECT_EQ(means[2].f1_micro, 0.7);
  EXPECT_FALSE(means[2].auc_macro.has_value());
}

TEST(Report, CsvRowsUseEmptyFieldsForUndefinedAuc) {
  MetricRow r = row("full", 3, 2, 0.5);
  r.auc_micro.reset();
  r.auc_macro.reset();
  r.boundary_low = 10;
  r.boundary_high = 20;
  std::stringstream out;
  write_report_header(out);
  write_report_rows(out, {r});
  std::string header, line;
  std::getline(out, header);
  std::getline(out, line);
  EXPECT_EQ(header, "variant,seed,split,quarter,f1_micro,f1_macro,auc_micro,auc_macro,boundary_low,boundary_high");
  EXPECT_EQ(line.substr(0, 13), "full,3,test,2");
  EXPECT_NE(line.find(",,10,20"), std::string::npos) << line;
}

TEST(RunExperiment, CardinalityBoundariesAndMeans) {
  SyntheticCorpusSpec spec;
  spec.n_docs = 60;
  spec.len_min = 8;
  spec.len_max = 50;
  const Corpus c = generate_synthetic_corpus(spec);
  ModelConfig base = tiny_model_config(static_cast<Index>(c.vocab.size()), c.class_count);
  TrainConfig tc;
  tc.max_epochs = 1;
  int sunk = 0;
  const auto reports =
      run_experiment(c, base, tc, {Variant::kFull, Variant::kWoBoth}, {1}, [&](const EvaluationReport&) { ++sunk; });
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_EQ(sunk, 2);
  const QuarterSplit qs = quarter_split(c.test);
  for (const auto& rep : reports) {
    ASSERT_EQ(rep.rows.size(), 5u);
    for (int q = 1; q <= 4; ++q) {
      const MetricRow& r = rep.rows[static_cast<std::size_t>(q)];
      EXPECT_EQ(r.quarter, q);
      EXPECT_EQ(r.boundary_low, qs.quarters[static_cast<std::size_t>(q - 1)].min_length);
      EXPECT_EQ(r.boundary_high, qs.quarters[static_cast<std::size_t>(q - 1)].max_length);
      EXPECT_GE(r.f1_micro, 0.0);
      EXPECT_LE(r.f1_micro, 1.0);
    }
  }
  // A single seed: means equal per-seed values.
  const auto means = mean_rows(reports);
  ASSERT_EQ(means.size(), 10u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(means[i].f1_micro, reports[0].rows[i].f1_micro);
  EXPECT_THROW(run_experiment(c, base, tc, {Variant::kFull}, {}), std::invalid_argument);
}

}  // namespace
}  // namespace lamkit
