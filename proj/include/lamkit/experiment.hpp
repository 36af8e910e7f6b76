#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lamkit/training.hpp"

namespace lamkit {

enum class Variant { kFull, kWoMk, kWoLav, kWoBoth };

std::string to_string(Variant v);
Variant parse_variant(std::string_view text);
inline constexpr std::array<Variant, 4> kAllVariants = {Variant::kFull, Variant::kWoMk, Variant::kWoLav,
                                                       Variant::kWoBoth};

/// Drops multi-kernel encoding (keeps the largest kernel) and/or the
/// length-aware path.
ModelConfig build_ablation(const ModelConfig& base, Variant variant);

/// Length quarters of a document list: stable sort by (token_count, id),
/// four contiguous groups whose sizes differ by at most one, larger groups
/// first.
struct Quarter {
  std::vector<Document> docs;
  Index min_length = 0;
  Index max_length = 0;
};

struct QuarterSplit {
  std::array<Quarter, 4> quarters;
  std::array<Index, 3> quantiles{};  // nearest-rank 25/50/75 percent lengths
};

QuarterSplit quarter_split(const std::vector<Document>& docs);

/// Length and label statistics of one split. Quantiles are nearest-rank;
/// `labels` counts classes with at least one positive document.
struct CorpusStats {
  Index q25 = 0;
  Index q50 = 0;
  Index q75 = 0;
  double mean_length = 0.0;
  std::size_t size = 0;
  int labels = 0;
};

/// Throws std::invalid_argument for an empty document list.
CorpusStats corpus_stats(const std::vector<Document>& docs, int class_count);

/// One line of a report: quarter 0 is the whole split.
struct MetricRow {
  std::string variant;
  std::optional<std::uint64_t> seed;  // empty for seed-averaged rows
  std::string split;
  int quarter = 0;
  double f1_micro = 0.0;
  double f1_macro = 0.0;
  std::optional<double> auc_micro;
  std::optional<double> auc_macro;
  Index boundary_low = 0;
  Index boundary_high = 0;
};

nlohmann::json to_json(const MetricRow& row);

struct EvaluationReport {
  Variant variant = Variant::kFull;
  std::uint64_t seed = 0;
  int best_epoch = 0;
  std::vector<EpochRecord> history;
  std::vector<MetricRow> rows;  // overall + 4 quarters
};

/// Overall row plus one row per length quarter for `docs`.
std::vector<MetricRow> stratified_rows(const Model& model, const std::vector<Document>& docs,
                                       const std::string& variant, std::optional<std::uint64_t> seed,
                                       const std::string& split, bool quarters);

using ReportSink = std::function<void(const EvaluationReport&)>;

/// Trains every variant for every seed (variant-major, in the given order)
/// and evaluates the test split overall and per quarter. `sink` sees each
/// report as soon as it is complete.
std::vector<EvaluationReport> run_experiment(const Corpus& corpus, const ModelConfig& base,
                                             const TrainConfig& train_config,
                                             const std::vector<Variant>& variants,
                                             const std::vector<std::uint64_t>& seeds,
                                             const ReportSink& sink = {});

/// Per (variant, split, quarter) means over seeds, in first-seen order.
std::vector<MetricRow> mean_rows(const std::vector<EvaluationReport>& reports);

void write_report_header(std::ostream& out);
void write_report_rows(std::ostream& out, const std::vector<MetricRow>& rows);

nlohmann::json aggregate_json(const std::vector<EvaluationReport>& reports);

/// One row per variant: seed-mean overall F1/AUC and per-quarter F1-micro.
void write_ablation_table(std::ostream& out, const std::vector<EvaluationReport>& reports);

}  // namespace lamkit
