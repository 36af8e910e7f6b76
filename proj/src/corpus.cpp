#include "lamkit/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "lamkit/random.hpp"

namespace lamkit {

namespace {

const char* const kReservedTokens[kReservedIds] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};

std::string line_error(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  return path.string() + ":" + std::to_string(line) + ": " + what;
}

}  // namespace

std::string to_string(TaskKind kind) {
  return kind == TaskKind::kMultiLabel ? "multi_label" : "single_label";
}

TaskKind parse_task_kind(std::string_view text) {
  if (text == "multi_label") return TaskKind::kMultiLabel;
  if (text == "single_label") return TaskKind::kSingleLabel;
  throw std::invalid_argument("unknown task kind '" + std::string(text) + "'");
}

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "valid") return Split::kValid;
  if (text == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + std::string(text) + "'");
}

Vocabulary::Vocabulary() {
  for (const char* t : kReservedTokens) append(t);
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view token) const { return ids_.count(std::string(token)) > 0; }

int Vocabulary::append(std::string token) {
  const int next = static_cast<int>(tokens_.size());
  if (!ids_.emplace(token, next).second) {
    throw std::invalid_argument("duplicate vocabulary token '" + token + "'");
  }
  tokens_.push_back(std::move(token));
  return next;
}

void Vocabulary::write(std::ostream& out) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
}

Vocabulary Vocabulary::read(std::istream& in) {
  Vocabulary vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) {
      throw CorpusError("vocabulary line " + std::to_string(line_no) + ": missing tab");
    }
    const std::string token = line.substr(0, tab);
    const int id = std::stoi(line.substr(tab + 1));
    if (static_cast<std::size_t>(id) < kReservedIds) {
      if (token != kReservedTokens[id]) {
        throw CorpusError("vocabulary line " + std::to_string(line_no) + ": reserved id " +
                          std::to_string(id) + " must be " + kReservedTokens[id]);
      }
      continue;
    }
    if (static_cast<std::size_t>(id) != vocab.size()) {
      throw CorpusError("vocabulary line " + std::to_string(line_no) + ": ids must be dense and ascending");
    }
    vocab.append(token);
  }
  return vocab;
}

const std::vector<Document>& Corpus::split(Split s) const {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kValid: return valid;
    case Split::kTest: return test;
  }
  return train;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      tokens.emplace_back(1, ch);
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

Vocabulary build_vocab(const std::vector<std::string>& texts, int min_freq) {
  if (min_freq < 1) throw std::invalid_argument("build_vocab: min_freq must be >= 1");
  if (texts.empty()) throw CorpusError("build_vocab: no texts");
  std::map<std::string, long> counts;
  for (const auto& text : texts) {
    for (auto& tok : tokenize(text)) ++counts[tok];
  }
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (auto& [tok, n] : ranked) {
    if (n >= min_freq && !vocab.contains(tok)) vocab.append(tok);
  }
  return vocab;
}

std::vector<int> encode_text(std::string_view text, const Vocabulary& vocab) {
  std::vector<std::string> tokens = tokenize(text);
  if (tokens.empty()) throw EmptyDocumentError("empty document text");
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.id(t));
  return ids;
}

std::vector<std::string> decode_ids(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(vocab.token(id));
  return out;
}

Corpus build_corpus(const std::vector<RawDocument>& records, int class_count, TaskKind task_kind,
                    int min_freq) {
  if (class_count < 1) throw CorpusError("class_count must be >= 1");
  std::vector<std::string> train_texts;
  std::unordered_set<std::string> ids;
  for (const auto& r : records) {
    if (!ids.insert(r.id).second) throw CorpusError("duplicate document id '" + r.id + "'");
    if (r.split == Split::kTrain) train_texts.push_back(r.text);
  }
  return encode_corpus(records, class_count, task_kind, build_vocab(train_texts, min_freq));
}

Corpus encode_corpus(const std::vector<RawDocument>& records, int class_count, TaskKind task_kind,
                     Vocabulary vocab) {
  if (class_count < 1) throw CorpusError("class_count must be >= 1");
  Corpus corpus;
  corpus.class_count = class_count;
  corpus.task_kind = task_kind;
  corpus.vocab = std::move(vocab);
  for (const auto& r : records) {
    Document doc;
    doc.id = r.id;
    try {
      doc.tokens = encode_text(r.text, corpus.vocab);
    } catch (const EmptyDocumentError&) {
      throw EmptyDocumentError("document '" + r.id + "' has no tokens");
    }
    doc.labels.assign(static_cast<std::size_t>(class_count), 0);
    for (int label : r.labels) {
      if (label < 0 || label >= class_count) {
        throw CorpusError("document '" + r.id + "': label " + std::to_string(label) +
                          " outside [0, " + std::to_string(class_count) + ")");
      }
      doc.labels[static_cast<std::size_t>(label)] = 1;
    }
    if (task_kind == TaskKind::kSingleLabel &&
        std::count(doc.labels.begin(), doc.labels.end(), 1) != 1) {
      throw CorpusError("document '" + r.id + "': single-label task needs exactly one label");
    }
    switch (r.split) {
      case Split::kTrain: corpus.train.push_back(std::move(doc)); break;
      case Split::kValid: corpus.valid.push_back(std::move(doc)); break;
      case Split::kTest: corpus.test.push_back(std::move(doc)); break;
    }
  }
  return corpus;
}

std::vector<RawDocument> read_jsonl_records(const std::filesystem::path& path, int class_count,
                                            TaskKind task_kind) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file " + path.string());

  std::map<std::string, Split> manifest;
  const std::filesystem::path manifest_path = path.string() + ".splits.json";
  if (std::filesystem::exists(manifest_path)) {
    std::ifstream mf(manifest_path);
    try {
      const auto j = nlohmann::json::parse(mf);
      for (const auto& [name, ids] : j.items()) {
        const Split s = parse_split(name);
        for (const auto& id : ids) manifest[id.get<std::string>()] = s;
      }
    } catch (const std::exception& e) {
      throw CorpusError("split manifest " + manifest_path.string() + ": " + e.what());
    }
  }

  std::vector<RawDocument> records;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    RawDocument rec;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.is_object()) throw CorpusError("expected a JSON object");
      for (const char* field : {"id", "text", "labels"}) {
        if (!j.contains(field)) throw CorpusError(std::string("missing field \"") + field + "\"");
      }
      rec.id = j.at("id").get<std::string>();
      rec.text = j.at("text").get<std::string>();
      rec.labels = j.at("labels").get<std::vector<int>>();
      if (j.contains("split")) {
        rec.split = parse_split(j.at("split").get<std::string>());
      } else if (auto it = manifest.find(rec.id); it != manifest.end()) {
        rec.split = it->second;
      } else {
        throw CorpusError("no split for id '" + rec.id + "' (no \"split\" field or manifest entry)");
      }
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError(line_error(path, line_no, std::string("malformed line: ") + e.what()));
    } catch (const std::invalid_argument& e) {
      throw CorpusError(line_error(path, line_no, e.what()));
    } catch (const CorpusError& e) {
      throw CorpusError(line_error(path, line_no, e.what()));
    }
    for (int label : rec.labels) {
      if (label < 0 || label >= class_count) {
        throw CorpusError(line_error(path, line_no, "label " + std::to_string(label) +
                                                        " outside [0, " + std::to_string(class_count) + ")"));
      }
    }
    if (task_kind == TaskKind::kSingleLabel && rec.labels.size() != 1) {
      throw CorpusError(line_error(path, line_no, "single-label task needs exactly one label"));
    }
    if (!seen.insert(rec.id).second) {
      throw CorpusError(line_error(path, line_no, "duplicate id '" + rec.id + "'"));
    }
    if (tokenize(rec.text).empty()) {
      throw CorpusError(line_error(path, line_no, "empty document text"));
    }
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw CorpusError("corpus file " + path.string() + " has no documents");
  return records;
}

Corpus load_jsonl_corpus(const std::filesystem::path& path, int class_count, TaskKind task_kind) {
  return build_corpus(read_jsonl_records(path, class_count, task_kind), class_count, task_kind);
}

void write_jsonl_records(std::ostream& out, const std::vector<RawDocument>& records) {
  for (const auto& r : records) {
    nlohmann::json j;
    j["id"] = r.id;
    j["text"] = r.text;
    j["labels"] = r.labels;
    j["split"] = to_string(r.split);
    out << j.dump() << '\n';
  }
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

Split split_for_id(std::string_view id) {
  const auto bucket = fnv1a64(id) % 100;
  if (bucket < 70) return Split::kTrain;
  if (bucket < 85) return Split::kValid;
  return Split::kTest;
}

std::vector<RawDocument> generate_synthetic_records(const SyntheticCorpusSpec& spec) {
  if (spec.len_min < 1 || spec.len_min > spec.len_max) {
    throw std::invalid_argument("synthetic corpus: need 1 <= len_min <= len_max");
  }
  if (spec.class_count < 2) throw std::invalid_argument("synthetic corpus: class_count must be >= 2");
  if (spec.n_docs < 1) throw std::invalid_argument("synthetic corpus: n_docs must be >= 1");

  Rng rng(spec.seed);
  std::vector<double> zipf_cdf(kSyntheticFillerTokens);
  double total = 0.0;
  for (int r = 0; r < kSyntheticFillerTokens; ++r) {
    total += 1.0 / (r + 1.0);
    zipf_cdf[static_cast<std::size_t>(r)] = total;
  }

  const double log_lo = std::log(static_cast<double>(spec.len_min));
  const double log_hi = std::log(static_cast<double>(spec.len_max) + 1.0);
  const int last = spec.class_count - 1;

  std::vector<RawDocument> records;
  records.reserve(static_cast<std::size_t>(spec.n_docs));
  for (int i = 0; i < spec.n_docs; ++i) {
    const double u = log_lo + (log_hi - log_lo) * uniform01(rng);
    const int length = std::clamp(static_cast<int>(std::floor(std::exp(u))), spec.len_min, spec.len_max);
    int bucket = 0;
    if (spec.len_max > spec.len_min) {
      bucket = std::min(3, static_cast<int>(4.0 * (std::log(static_cast<double>(length)) - log_lo) /
                                             (log_hi - log_lo)));
    }

    std::vector<int> labels;
    if (spec.task_kind == TaskKind::kMultiLabel) {
      for (int c = 0; c < spec.class_count; ++c) {
        const double p = c == last ? 0.2 + 0.2 * bucket : 0.5;
        if (uniform01(rng) < p) labels.push_back(c);
      }
    } else {
      // The last class weighs 0.5, 1.0, 1.5, 2.0 across length quartiles.
      const double last_weight = 0.5 * (bucket + 1);
      const double draw = uniform01(rng) * (last + last_weight);
      labels.push_back(std::min(last, static_cast<int>(draw)));
    }

    std::vector<std::string> words(static_cast<std::size_t>(length));
    for (auto& w : words) {
      const double target = uniform01(rng) * total;
      const auto rank = std::upper_bound(zipf_cdf.begin(), zipf_cdf.end(), target) - zipf_cdf.begin();
      w = "w" + std::to_string(std::min<long>(rank, kSyntheticFillerTokens - 1));
    }
    const std::string marker = "lenq" + std::to_string(bucket);
    for (int k = 0; k < length / 10; ++k) {
      words[uniform_index(rng, static_cast<std::uint64_t>(length))] = marker;
    }
    const int copies = 1 + length / 160;
    for (int c : labels) {
      for (int k = 0; k < copies; ++k) {
        // Avoid erasing another class's signature while free slots remain.
        auto pos = uniform_index(rng, static_cast<std::uint64_t>(length));
        for (int tries = 0; words[pos].starts_with("sig") && tries < 4 * length; ++tries) {
          pos = uniform_index(rng, static_cast<std::uint64_t>(length));
        }
        words[pos] = "sig" + std::to_string(c);
      }
    }

    RawDocument rec;
    char id[32];
    std::snprintf(id, sizeof id, "syn-%05d", i);
    rec.id = id;
    std::ostringstream text;
    for (std::size_t k = 0; k < words.size(); ++k) text << (k ? " " : "") << words[k];
    rec.text = text.str();
    rec.labels = std::move(labels);
    rec.split = split_for_id(rec.id);
    records.push_back(std::move(rec));
  }
  return records;
}

Corpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec) {
  return build_corpus(generate_synthetic_records(spec), spec.class_count, spec.task_kind);
}

}  // namespace lamkit
