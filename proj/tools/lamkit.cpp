// lamkit command-line driver: train, eval, ablate, stats.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lamkit/run_config.hpp"

namespace fs = std::filesystem;
using namespace lamkit;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

// Input problems (bad config, unreadable corpus, mismatched checkpoint)
// exit with 1; failures while running exit with 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string config;
  std::string corpus;
  bool corpus_given = false;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config, "Run config (flat JSON with dotted keys)");
  cmd->add_option("--corpus", opts.corpus, "JSONL corpus; replaces the synthetic source");
  cmd->add_option("--set", opts.sets, "Override one config key, key=value (repeatable)");
}

// Precedence, lowest first: config file, LAMKIT_SEED (when use_env), --set.
RunConfig resolve(const CommonOptions& opts, const std::string& fallback_config = {}, bool use_env = false) {
  RunConfig cfg;
  if (!opts.config.empty()) {
    cfg = load_run_config(opts.config);
  } else if (!fallback_config.empty()) {
    cfg = load_run_config(fallback_config);
  }
  if (use_env) apply_seed_environment(cfg);
  for (const auto& s : opts.sets) apply_override(cfg, s);
  if (opts.corpus_given) {
    cfg.corpus_source = CorpusSource::kJsonl;
    cfg.corpus_path = opts.corpus;
  }
  validate(cfg);
  return cfg;
}

// Refuses to reuse a non-empty directory unless forced.
void prepare_output(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) {
    throw InputError("output path " + dir.string() + " exists and is not a directory");
  }
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw InputError("output directory " + dir.string() + " is not empty; pass --force to overwrite");
  }
  fs::create_directories(dir);
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Corpus load_corpus_checked(const RunConfig& cfg) {
  try {
    return load_corpus(cfg);
  } catch (const CorpusError& e) {
    throw InputError(std::string("corpus: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("corpus: ") + e.what());
  }
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void on_signal(int) { request_interrupt(); }

int cmd_train(const CommonOptions& opts, const std::string& out_flag, std::optional<std::uint64_t> seed,
              bool force) {
  RunConfig cfg = resolve(opts, {}, true);
  if (seed) cfg.train.seed = *seed;
  if (!out_flag.empty()) cfg.output_dir = out_flag;

  const Corpus corpus = load_corpus_checked(cfg);
  const ModelConfig mcfg = model_config_for(cfg, static_cast<Index>(corpus.vocab.size()));
  const fs::path out = cfg.output_dir;
  prepare_output(out, force);
  write_text(out / "config.resolved.json", canonical_string(cfg));

  std::cerr << "train: " << corpus.train.size() << " docs, " << model_parameter_count(mcfg)
            << " parameters, seed " << cfg.train.seed << "\n";
  const TrainResult result = train(corpus, mcfg, cfg.train, [](const EpochRecord& r) {
    std::cerr << "epoch " << r.epoch << "  loss " << fixed(r.train_loss, 4) << "  valid f1-micro "
              << fixed(r.valid_f1_micro, 4) << "  (" << fixed(r.seconds, 1) << " s)\n";
  });

  save_checkpoint(result.best, out / "checkpoint.txt");
  {
    auto vocab = open_output(out / "vocab.tsv");
    corpus.vocab.write(vocab);
  }
  {
    auto history = open_output(out / "history.csv");
    write_history_csv(history, result.history);
  }
  std::cout << "best epoch " << result.best_epoch << ", valid f1-micro " << fixed(result.best_valid_f1_micro, 4)
            << "\nwrote " << out.string() << "\n";
  return 0;
}

std::string variant_name(const ModelConfig& cfg) {
  const bool multi = cfg.kernels.size() > 1;
  if (cfg.length_aware) return multi ? "full" : "wo_mk";
  return multi ? "wo_lav" : "wo_both";
}

int cmd_eval(const CommonOptions& opts, const std::string& checkpoint_flag, const std::string& out_flag,
             const std::string& split_name, bool quarters, bool force) {
  fs::path checkpoint = checkpoint_flag;
  if (fs::is_directory(checkpoint)) checkpoint /= "checkpoint.txt";
  if (!fs::exists(checkpoint)) throw InputError("checkpoint not found: " + checkpoint.string());
  const fs::path run_dir = checkpoint.parent_path();
  const fs::path snapshot = run_dir / "config.resolved.json";
  if (opts.config.empty() && !fs::exists(snapshot)) {
    throw InputError("no --config given and no config.resolved.json next to the checkpoint");
  }
  const RunConfig cfg = resolve(opts, snapshot.string());
  const Split split = parse_split(split_name);

  Model model;
  try {
    model = load_checkpoint(checkpoint);
  } catch (const std::exception& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }
  if (model.config.class_count != cfg.class_count) {
    throw InputError("class-count mismatch: checkpoint has " + std::to_string(model.config.class_count) +
                     " classes, corpus has " + std::to_string(cfg.class_count));
  }
  if (model.config.task_kind != cfg.task_kind) throw InputError("task-kind mismatch between checkpoint and corpus");

  Corpus corpus;
  try {
    const fs::path vocab_path = run_dir / "vocab.tsv";
    if (fs::exists(vocab_path)) {
      std::ifstream in(vocab_path);
      corpus = encode_corpus(load_records(cfg), cfg.class_count, cfg.task_kind, Vocabulary::read(in));
    } else {
      corpus = load_corpus(cfg);
    }
  } catch (const CorpusError& e) {
    throw InputError(std::string("corpus: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("corpus: ") + e.what());
  }
  if (static_cast<Index>(corpus.vocab.size()) != model.config.segment_encoder.vocab_size) {
    throw InputError("vocabulary mismatch: checkpoint expects " +
                     std::to_string(model.config.segment_encoder.vocab_size) + " tokens, corpus has " +
                     std::to_string(corpus.vocab.size()));
  }

  const fs::path out = out_flag.empty() ? run_dir / ("eval-" + split_name) : fs::path(out_flag);
  prepare_output(out, force);
  const std::vector<MetricRow> rows =
      stratified_rows(model, corpus.split(split), variant_name(model.config), cfg.train.seed, split_name, quarters);
  {
    auto csv = open_output(out / "report.csv");
    write_report_header(csv);
    write_report_rows(csv, rows);
  }
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) j.push_back(to_json(r));
  write_text(out / "report.json", nlohmann::json{{"rows", j}}.dump(2) + "\n");
  write_report_rows(std::cout, rows);
  return 0;
}

int cmd_ablate(const CommonOptions& opts, const std::string& out_flag, const std::vector<std::string>& variants,
               const std::vector<std::uint64_t>& seeds, bool force) {
  RunConfig cfg = resolve(opts);
  if (!variants.empty()) {
    cfg.variants.clear();
    for (const auto& v : variants) {
      try {
        cfg.variants.push_back(parse_variant(v));
      } catch (const std::invalid_argument& e) {
        throw ConfigError("experiment.variants", e.what());
      }
    }
  }
  if (!seeds.empty()) cfg.seeds = seeds;
  if (!out_flag.empty()) cfg.output_dir = out_flag;

  const Corpus corpus = load_corpus_checked(cfg);
  const ModelConfig base = model_config_for(cfg, static_cast<Index>(corpus.vocab.size()));
  for (Variant v : cfg.variants) {
    try {
      build_ablation(base, v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("experiment.variants", e.what());
    }
  }
  const fs::path out = cfg.output_dir;
  prepare_output(out, force);
  write_text(out / "config.resolved.json", canonical_string(cfg));
  fs::create_directories(out / "histories");

  auto report = open_output(out / "report.csv");
  write_report_header(report);
  report.flush();

  std::vector<EvaluationReport> reports;
  try {
    reports = run_experiment(corpus, base, cfg.train, cfg.variants, cfg.seeds, [&](const EvaluationReport& r) {
      write_report_rows(report, r.rows);
      report.flush();
      auto history =
          open_output(out / "histories" / (to_string(r.variant) + "-seed" + std::to_string(r.seed) + ".csv"));
      write_history_csv(history, r.history);
      std::cerr << to_string(r.variant) << " seed " << r.seed << ": best epoch " << r.best_epoch
                << ", test f1-micro " << fixed(r.rows.front().f1_micro, 4) << "\n";
    });
  } catch (const std::exception& e) {
    report.flush();
    std::cerr << "lamkit ablate: " << e.what() << "\npartial results kept in " << (out / "report.csv").string()
              << "\n";
    return kExitRuntime;
  }

  write_report_rows(report, mean_rows(reports));
  report.flush();
  {
    auto table = open_output(out / "ablation.csv");
    write_ablation_table(table, reports);
  }
  write_text(out / "aggregate.json", aggregate_json(reports).dump(2) + "\n");
  write_ablation_table(std::cout, reports);
  return 0;
}

int cmd_stats(const CommonOptions& opts) {
  const RunConfig cfg = resolve(opts);
  const Corpus corpus = load_corpus_checked(cfg);
  std::vector<Document> all;
  for (Split s : {Split::kTrain, Split::kValid, Split::kTest}) {
    all.insert(all.end(), corpus.split(s).begin(), corpus.split(s).end());
  }
  std::cout << "split,q25,q50,q75,l_mean,size,labels\n";
  auto line = [&](const std::string& name, const std::vector<Document>& docs) {
    if (docs.empty()) {
      std::cout << name << ",,,,,0,0\n";
      return;
    }
    const CorpusStats s = corpus_stats(docs, corpus.class_count);
    std::cout << name << ',' << s.q25 << ',' << s.q50 << ',' << s.q75 << ',' << fixed(s.mean_length, 2) << ','
              << s.size << ',' << s.labels << '\n';
  };
  line("train", corpus.train);
  line("valid", corpus.valid);
  line("test", corpus.test);
  line("all", all);
  std::cout << "splits," << corpus.train.size() << ',' << corpus.valid.size() << ',' << corpus.test.size()
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Length-aware multi-kernel transformer for long document classification"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool force = false;
  bool quarters = false;
  std::string checkpoint;
  std::string split = "test";
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;

  auto* train_cmd = app.add_subcommand("train", "Train the full model and write a checkpoint");
  add_common(train_cmd, common);
  train_cmd->add_option("--out", out, "Output directory (default: output.dir)");
  train_cmd->add_option("--seed", seed, "Training seed; overrides config and LAMKIT_SEED");
  train_cmd->add_flag("--force", force, "Allow writing into a non-empty output directory");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file or training output directory")->required();
  eval_cmd->add_option("--split", split, "train, valid or test")->check(CLI::IsMember({"train", "valid", "test"}));
  eval_cmd->add_option("--out", out, "Output directory (default: <run>/eval-<split>)");
  eval_cmd->add_flag("--quarters", quarters, "Add one row per length quarter");
  eval_cmd->add_flag("--force", force, "Allow writing into a non-empty output directory");

  auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate every variant for every seed");
  add_common(ablate_cmd, common);
  ablate_cmd->add_option("--out", out, "Output directory (default: output.dir)");
  ablate_cmd->add_option("--variants", variants, "Comma-separated subset of full,wo_mk,wo_lav,wo_both")
      ->delimiter(',');
  ablate_cmd->add_option("--seeds", seeds, "Comma-separated seeds")->delimiter(',');
  ablate_cmd->add_flag("--force", force, "Allow writing into a non-empty output directory");

  auto* stats_cmd = app.add_subcommand("stats", "Print length quantiles, sizes and label counts per split");
  add_common(stats_cmd, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  for (auto* cmd : {train_cmd, eval_cmd, ablate_cmd, stats_cmd}) {
    if (cmd->count("--corpus") > 0) common.corpus_given = true;
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "train") return cmd_train(common, out, seed, force);
    if (name == "eval") return cmd_eval(common, checkpoint, out, split, quarters, force);
    if (name == "ablate") return cmd_ablate(common, out, variants, seeds, force);
    return cmd_stats(common);
  } catch (const ConfigError& e) {
    std::cerr << "lamkit " << name << ": " << e.what() << "\n";
    return kExitConfig;
  } catch (const InputError& e) {
    std::cerr << "lamkit " << name << ": " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "lamkit " << name << ": " << e.what() << "\n";
    return kExitRuntime;
  }
}
