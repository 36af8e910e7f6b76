#include "lamkit/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <ostream>
#include <tuple>

namespace lamkit {

namespace {

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json to_json(const MetricRow& r) {
  return {{"variant", r.variant},
          {"seed", r.seed ? nlohmann::json(*r.seed) : nlohmann::json("mean")},
          {"split", r.split},
          {"quarter", r.quarter},
          {"f1_micro", r.f1_micro},
          {"f1_macro", r.f1_macro},
          {"auc_micro", optional_json(r.auc_micro)},
          {"auc_macro", optional_json(r.auc_macro)},
          {"boundary_low", r.boundary_low},
          {"boundary_high", r.boundary_high}};
}

namespace {

MetricRow metric_row(const Predictions& p, const std::string& variant, std::optional<std::uint64_t> seed,
                     const std::string& split, int quarter, Index low, Index high) {
  const SplitMetrics m = compute_metrics(p);
  MetricRow row{variant, seed, split, quarter, m.f1.micro, m.f1.macro, std::nullopt, std::nullopt, low, high};
  if (m.auc) {
    row.auc_micro = m.auc->micro;
    row.auc_macro = m.auc->macro;
  }
  return row;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kWoMk: return "wo_mk";
    case Variant::kWoLav: return "wo_lav";
    case Variant::kWoBoth: return "wo_both";
  }
  return "full";
}

Variant parse_variant(std::string_view text) {
  for (Variant v : kAllVariants) {
    if (text == to_string(v)) return v;
  }
  throw std::invalid_argument("unknown variant '" + std::string(text) + "'");
}

ModelConfig build_ablation(const ModelConfig& base, Variant variant) {
  if (base.kernels.empty()) throw std::invalid_argument("build_ablation: empty kernel set");
  ModelConfig cfg = base;
  if (variant == Variant::kWoMk || variant == Variant::kWoBoth) {
    const auto largest = std::max_element(base.kernels.begin(), base.kernels.end(),
                                          [](const KernelSpec& a, const KernelSpec& b) { return a.size < b.size; });
    cfg.kernels = {*largest};
  }
  if (variant == Variant::kWoLav || variant == Variant::kWoBoth) cfg.length_aware = false;
  validate(cfg);
  return cfg;
}

QuarterSplit quarter_split(const std::vector<Document>& docs) {
  if (docs.size() < 4) {
    throw std::invalid_argument("quarter_split: need at least 4 documents, got " + std::to_string(docs.size()));
  }
  std::vector<const Document*> sorted;
  sorted.reserve(docs.size());
  for (const auto& d : docs) sorted.push_back(&d);
  std::stable_sort(sorted.begin(), sorted.end(), [](const Document* a, const Document* b) {
    return std::forward_as_tuple(a->token_count(), a->id) < std::forward_as_tuple(b->token_count(), b->id);
  });

  QuarterSplit out;
  const std::size_t n = sorted.size();
  std::size_t at = 0;
  for (std::size_t q = 0; q < 4; ++q) {
    const std::size_t size = n / 4 + (q < n % 4 ? 1 : 0);
    Quarter& quarter = out.quarters[q];
    for (std::size_t i = at; i < at + size; ++i) quarter.docs.push_back(*sorted[i]);
    quarter.min_length = static_cast<Index>(sorted[at]->token_count());
    quarter.max_length = static_cast<Index>(sorted[at + size - 1]->token_count());
    at += size;
  }
  std::vector<Index> lengths;
  lengths.reserve(n);
  for (const Document* d : sorted) lengths.push_back(static_cast<Index>(d->token_count()));
  out.quantiles = {nearest_rank(lengths, 25), nearest_rank(lengths, 50), nearest_rank(lengths, 75)};
  return out;
}

CorpusStats corpus_stats(const std::vector<Document>& docs, int class_count) {
  if (docs.empty()) throw std::invalid_argument("corpus_stats: empty document list");
  std::vector<Index> lengths;
  lengths.reserve(docs.size());
  std::vector<bool> seen(static_cast<std::size_t>(class_count), false);
  double total = 0.0;
  for (const auto& d : docs) {
    lengths.push_back(static_cast<Index>(d.token_count()));
    total += static_cast<double>(d.token_count());
    for (std::size_t c = 0; c < d.labels.size() && c < seen.size(); ++c) {
      if (d.labels[c] != 0) seen[c] = true;
    }
  }
  std::sort(lengths.begin(), lengths.end());
  CorpusStats s;
  s.q25 = nearest_rank(lengths, 25);
  s.q50 = nearest_rank(lengths, 50);
  s.q75 = nearest_rank(lengths, 75);
  s.mean_length = total / static_cast<double>(docs.size());
  s.size = docs.size();
  s.labels = static_cast<int>(std::count(seen.begin(), seen.end(), true));
  return s;
}

std::vector<MetricRow> stratified_rows(const Model& model, const std::vector<Document>& docs,
                                       const std::string& variant, std::optional<std::uint64_t> seed,
                                       const std::string& split, bool quarters) {
  if (docs.empty()) throw UndefinedMetricError("no documents to evaluate in split " + split);
  const Predictions all = predict(model, docs);
  Index low = static_cast<Index>(docs.front().token_count());
  Index high = low;
  for (const auto& d : docs) {
    low = std::min(low, static_cast<Index>(d.token_count()));
    high = std::max(high, static_cast<Index>(d.token_count()));
  }
  std::vector<MetricRow> rows{metric_row(all, variant, seed, split, 0, low, high)};
  if (!quarters) return rows;

  const QuarterSplit qs = quarter_split(docs);
  for (int q = 0; q < 4; ++q) {
    const Quarter& quarter = qs.quarters[static_cast<std::size_t>(q)];
    rows.push_back(metric_row(predict(model, quarter.docs), variant, seed, split, q + 1, quarter.min_length,
                              quarter.max_length));
  }
  return rows;
}

std::vector<EvaluationReport> run_experiment(const Corpus& corpus, const ModelConfig& base,
                                             const TrainConfig& train_config,
                                             const std::vector<Variant>& variants,
                                             const std::vector<std::uint64_t>& seeds, const ReportSink& sink) {
  if (seeds.empty()) throw std::invalid_argument("run_experiment: need at least one seed");
  if (variants.empty()) throw std::invalid_argument("run_experiment: need at least one variant");
  std::vector<EvaluationReport> reports;
  for (Variant variant : variants) {
    const ModelConfig cfg = build_ablation(base, variant);
    for (std::uint64_t seed : seeds) {
      TrainConfig tc = train_config;
      tc.seed = seed;
      TrainResult trained = train(corpus, cfg, tc);
      EvaluationReport report;
      report.variant = variant;
      report.seed = seed;
      report.best_epoch = trained.best_epoch;
      report.history = std::move(trained.history);
      report.rows = stratified_rows(trained.best, corpus.test, to_string(variant), seed, "test", true);
      if (sink) sink(report);
      reports.push_back(std::move(report));
    }
  }
  return reports;
}

std::vector<MetricRow> mean_rows(const std::vector<EvaluationReport>& reports) {
  using Key = std::tuple<std::string, std::string, int>;
  std::vector<Key> order;
  std::map<Key, std::vector<const MetricRow*>> groups;
  for (const auto& rep : reports) {
    for (const auto& row : rep.rows) {
      Key key{row.variant, row.split, row.quarter};
      auto [it, inserted] = groups.try_emplace(key);
      if (inserted) order.push_back(key);
      it->second.push_back(&row);
    }
  }
  std::vector<MetricRow> out;
  for (const Key& key : order) {
    const auto& rows = groups.at(key);
    const double n = static_cast<double>(rows.size());
    MetricRow mean = *rows.front();
    mean.seed.reset();
    mean.f1_micro = mean.f1_macro = 0.0;
    double auc_micro = 0.0;
    double auc_macro = 0.0;
    bool auc_defined = true;
    for (const MetricRow* r : rows) {
      mean.f1_micro += r->f1_micro;
      mean.f1_macro += r->f1_macro;
      if (r->auc_micro && r->auc_macro) {
        auc_micro += *r->auc_micro;
        auc_macro += *r->auc_macro;
      } else {
        auc_defined = false;
      }
    }
    mean.f1_micro /= n;
    mean.f1_macro /= n;
    mean.auc_micro = auc_defined ? std::optional<double>(auc_micro / n) : std::nullopt;
    mean.auc_macro = auc_defined ? std::optional<double>(auc_macro / n) : std::nullopt;
    out.push_back(mean);
  }
  return out;
}

void write_report_header(std::ostream& out) {
  out << "variant,seed,split,quarter,f1_micro,f1_macro,auc_micro,auc_macro,boundary_low,boundary_high\n";
}

void write_report_rows(std::ostream& out, const std::vector<MetricRow>& rows) {
  for (const auto& r : rows) {
    out << r.variant << ',' << (r.seed ? std::to_string(*r.seed) : std::string("mean")) << ',' << r.split
        << ',' << r.quarter << ',' << format_number(r.f1_micro) << ',' << format_number(r.f1_macro) << ','
        << format_optional(r.auc_micro) << ',' << format_optional(r.auc_macro) << ',' << r.boundary_low << ','
        << r.boundary_high << '\n';
  }
}

nlohmann::json aggregate_json(const std::vector<EvaluationReport>& reports) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& rep : reports) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : rep.rows) rows.push_back(to_json(r));
    runs.push_back({{"variant", to_string(rep.variant)},
                    {"seed", rep.seed},
                    {"best_epoch", rep.best_epoch},
                    {"epochs", rep.history.size()},
                    {"rows", rows}});
  }
  nlohmann::json means = nlohmann::json::array();
  for (const auto& r : mean_rows(reports)) means.push_back(to_json(r));
  return {{"runs", runs}, {"means", means}};
}

void write_ablation_table(std::ostream& out, const std::vector<EvaluationReport>& reports) {
  out << "variant,seeds,f1_micro,f1_macro,auc_micro,auc_macro,q1_f1_micro,q2_f1_micro,q3_f1_micro,"
         "q4_f1_micro\n";
  const std::vector<MetricRow> means = mean_rows(reports);
  std::vector<std::string> variants;
  std::map<std::string, std::size_t> seed_counts;
  for (const auto& rep : reports) {
    const std::string name = to_string(rep.variant);
    if (seed_counts[name]++ == 0) variants.push_back(name);
  }
  for (const auto& name : variants) {
    const MetricRow* overall = nullptr;
    std::array<const MetricRow*, 4> quarters{};
    for (const auto& r : means) {
      if (r.variant != name) continue;
      if (r.quarter == 0) overall = &r;
      else if (r.quarter <= 4) quarters[static_cast<std::size_t>(r.quarter - 1)] = &r;
    }
    if (overall == nullptr) continue;
    out << name << ',' << seed_counts[name] << ',' << format_number(overall->f1_micro) << ','
        << format_number(overall->f1_macro) << ',' << format_optional(overall->auc_micro) << ','
        << format_optional(overall->auc_macro);
    for (const MetricRow* q : quarters) out << ',' << (q ? format_number(q->f1_micro) : "");
    out << '\n';
  }
}

}  // namespace lamkit
