#include "lamkit/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace lamkit {

namespace {

using nlohmann::json;

struct Field {
  const char* key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename T, typename Member>
Field plain(const char* key, Member member) {
  return {key, [member](const RunConfig& c) { return json(std::invoke(member, c)); },
          [member](RunConfig& c, const json& v) { std::invoke(member, c) = v.get<T>(); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"corpus.source",
       [](const RunConfig& c) { return json(c.corpus_source == CorpusSource::kSynthetic ? "synthetic" : "jsonl"); },
       [](RunConfig& c, const json& v) {
         const auto s = v.get<std::string>();
         if (s != "synthetic" && s != "jsonl") throw std::invalid_argument("expected \"synthetic\" or \"jsonl\"");
         c.corpus_source = s == "synthetic" ? CorpusSource::kSynthetic : CorpusSource::kJsonl;
       }},
      plain<std::string>("corpus.path", &RunConfig::corpus_path),
      plain<int>("corpus.class_count", &RunConfig::class_count),
      {"corpus.task_kind", [](const RunConfig& c) { return json(to_string(c.task_kind)); },
       [](RunConfig& c, const json& v) { c.task_kind = parse_task_kind(v.get<std::string>()); }},
      {"corpus.synthetic.seed", [](const RunConfig& c) { return json(c.synthetic.seed); },
       [](RunConfig& c, const json& v) { c.synthetic.seed = v.get<std::uint64_t>(); }},
      {"corpus.synthetic.n_docs", [](const RunConfig& c) { return json(c.synthetic.n_docs); },
       [](RunConfig& c, const json& v) { c.synthetic.n_docs = v.get<int>(); }},
      {"corpus.synthetic.len_min", [](const RunConfig& c) { return json(c.synthetic.len_min); },
       [](RunConfig& c, const json& v) { c.synthetic.len_min = v.get<int>(); }},
      {"corpus.synthetic.len_max", [](const RunConfig& c) { return json(c.synthetic.len_max); },
       [](RunConfig& c, const json& v) { c.synthetic.len_max = v.get<int>(); }},
      plain<std::vector<Index>>("model.kernels", &RunConfig::kernels),
      plain<std::vector<Index>>("model.strides", &RunConfig::strides),
      plain<std::vector<Index>>("model.max_segments", &RunConfig::max_segments),
      plain<Index>("model.d_model", &RunConfig::d_model),
      plain<Index>("model.heads", &RunConfig::heads),
      plain<Index>("model.d_ff", &RunConfig::d_ff),
      plain<Index>("model.segment_layers", &RunConfig::segment_layers),
      plain<Index>("model.document_layers", &RunConfig::document_layers),
      plain<Index>("model.length_layers", &RunConfig::length_layers),
      plain<double>("model.dropout", &RunConfig::dropout),
      plain<double>("model.classifier_dropout", &RunConfig::classifier_dropout),
      {"model.activation",
       [](const RunConfig& c) { return json(c.activation == Activation::kGelu ? "gelu" : "relu"); },
       [](RunConfig& c, const json& v) {
         const auto s = v.get<std::string>();
         if (s != "gelu" && s != "relu") throw std::invalid_argument("expected \"gelu\" or \"relu\"");
         c.activation = s == "gelu" ? Activation::kGelu : Activation::kRelu;
       }},
      {"train.learning_rate", [](const RunConfig& c) { return json(c.train.learning_rate); },
       [](RunConfig& c, const json& v) { c.train.learning_rate = v.get<double>(); }},
      {"train.batch_size", [](const RunConfig& c) { return json(c.train.batch_size); },
       [](RunConfig& c, const json& v) { c.train.batch_size = v.get<Index>(); }},
      {"train.max_epochs", [](const RunConfig& c) { return json(c.train.max_epochs); },
       [](RunConfig& c, const json& v) { c.train.max_epochs = v.get<int>(); }},
      {"train.patience", [](const RunConfig& c) { return json(c.train.patience); },
       [](RunConfig& c, const json& v) { c.train.patience = v.get<int>(); }},
      {"train.weight_decay", [](const RunConfig& c) { return json(c.train.weight_decay); },
       [](RunConfig& c, const json& v) { c.train.weight_decay = v.get<double>(); }},
      {"train.seed", [](const RunConfig& c) { return json(c.train.seed); },
       [](RunConfig& c, const json& v) { c.train.seed = v.get<std::uint64_t>(); }},
      {"train.beta1", [](const RunConfig& c) { return json(c.train.beta1); },
       [](RunConfig& c, const json& v) { c.train.beta1 = v.get<double>(); }},
      {"train.beta2", [](const RunConfig& c) { return json(c.train.beta2); },
       [](RunConfig& c, const json& v) { c.train.beta2 = v.get<double>(); }},
      {"train.eps", [](const RunConfig& c) { return json(c.train.eps); },
       [](RunConfig& c, const json& v) { c.train.eps = v.get<double>(); }},
      {"train.clip_norm", [](const RunConfig& c) { return json(c.train.clip_norm); },
       [](RunConfig& c, const json& v) { c.train.clip_norm = v.get<double>(); }},
      {"experiment.variants",
       [](const RunConfig& c) {
         json a = json::array();
         for (Variant v : c.variants) a.push_back(to_string(v));
         return a;
       },
       [](RunConfig& c, const json& v) {
         c.variants.clear();
         for (const auto& s : v) c.variants.push_back(parse_variant(s.get<std::string>()));
       }},
      plain<std::vector<std::uint64_t>>("experiment.seeds", &RunConfig::seeds),
      plain<std::string>("output.dir", &RunConfig::output_dir),
  };
  return table;
}

const Field* find_field(const std::string& key) {
  for (const Field& f : fields()) {
    if (key == f.key) return &f;
  }
  return nullptr;
}

void set_field(RunConfig& config, const std::string& key, const json& value) {
  const Field* field = find_field(key);
  if (field == nullptr) throw ConfigError(key, "unknown key");
  try {
    field->set(config, value);
  } catch (const json::exception& e) {
    throw ConfigError(key, std::string("bad value: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, e.what());
  }
}

void check(const RunConfig& c) {
  if (c.kernels.empty()) throw ConfigError("model.kernels", "need at least one kernel");
  if (!c.strides.empty() && c.strides.size() != c.kernels.size()) {
    throw ConfigError("model.strides", "must be empty or match model.kernels in length");
  }
  if (c.max_segments.size() != c.kernels.size()) {
    throw ConfigError("model.max_segments", "must match model.kernels in length");
  }
  if (c.class_count < 2 && c.corpus_source == CorpusSource::kSynthetic) {
    throw ConfigError("corpus.class_count", "synthetic corpus needs at least 2 classes");
  }
  if (c.seeds.empty()) throw ConfigError("experiment.seeds", "need at least one seed");
  if (c.variants.empty()) throw ConfigError("experiment.variants", "need at least one variant");
  try {
    validate(c.train);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("train", e.what());
  }
}

}  // namespace

void validate(const RunConfig& config) { check(config); }

json to_json(const RunConfig& config) {
  json j = json::object();
  for (const Field& f : fields()) j[f.key] = f.get(config);
  return j;
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("", "config must be a JSON object");
  RunConfig config;
  for (const auto& [key, value] : j.items()) set_field(config, key, value);
  check(config);
  return config;
}

std::string canonical_string(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("", "override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  set_field(config, key, value);
}

void apply_seed_environment(RunConfig& config) {
  const char* env = std::getenv("LAMKIT_SEED");
  if (env == nullptr || *env == '\0') return;
  try {
    std::size_t used = 0;
    const auto seed = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
    config.train.seed = seed;
  } catch (const std::exception&) {
    throw ConfigError("LAMKIT_SEED", std::string("not an unsigned integer: ") + env);
  }
}

ModelConfig model_config_for(const RunConfig& c, Index vocab_size) {
  ModelConfig m;
  for (std::size_t i = 0; i < c.kernels.size(); ++i) {
    const Index stride = c.strides.empty() ? c.kernels[i] : c.strides[i];
    m.kernels.push_back({c.kernels[i], stride, c.max_segments[i]});
  }
  m.segment_encoder = {c.segment_layers, c.heads, c.d_model, c.d_ff, c.dropout, vocab_size, c.activation};
  m.document_encoder = {c.document_layers, c.heads, c.d_model, c.d_ff, c.dropout, 0, c.activation};
  m.length_encoder = {c.length_layers, c.heads, c.d_model, c.d_ff, c.dropout, 0, c.activation};
  m.class_count = c.class_count;
  m.task_kind = c.task_kind;
  m.classifier_dropout = c.classifier_dropout;
  try {
    validate(m);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("model", e.what());
  }
  return m;
}

std::vector<RawDocument> load_records(const RunConfig& c) {
  if (c.corpus_source == CorpusSource::kJsonl) {
    if (c.corpus_path.empty()) throw ConfigError("corpus.path", "jsonl corpus needs a path");
    return read_jsonl_records(c.corpus_path, c.class_count, c.task_kind);
  }
  SyntheticCorpusSpec spec = c.synthetic;
  spec.class_count = c.class_count;
  spec.task_kind = c.task_kind;
  return generate_synthetic_records(spec);
}

Corpus load_corpus(const RunConfig& c) { return build_corpus(load_records(c), c.class_count, c.task_kind); }

}  // namespace lamkit
