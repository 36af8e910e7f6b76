#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lamkit {

enum class TaskKind { kMultiLabel, kSingleLabel };

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view text);

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kReservedIds = 4;

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyDocumentError : public CorpusError {
 public:
  using CorpusError::CorpusError;
};

/// Token <-> id bijection. Ids 0..3 are PAD, UNK, CLS, SEP.
class Vocabulary {
 public:
  Vocabulary();

  int id(std::string_view token) const;  // kUnkId when absent
  const std::string& token(int id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }

  /// Appends a learned token; returns its id. Duplicate tokens are rejected.
  int append(std::string token);

  /// "token<TAB>id" per line, ids ascending.
  void write(std::ostream& out) const;
  static Vocabulary read(std::istream& in);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct Document {
  std::string id;
  std::vector<int> tokens;  // CLS/SEP are added at segmentation
  std::vector<int> labels;  // multi-hot, length == class count
  std::size_t token_count() const { return tokens.size(); }
  friend bool operator==(const Document&, const Document&) = default;
};

enum class Split { kTrain, kValid, kTest };
std::string to_string(Split split);
Split parse_split(std::string_view text);

/// One corpus line before tokenization.
struct RawDocument {
  std::string id;
  std::string text;
  std::vector<int> labels;  // class indices
  Split split = Split::kTrain;
};

struct Corpus {
  std::vector<Document> train;
  std::vector<Document> valid;
  std::vector<Document> test;
  int class_count = 0;
  TaskKind task_kind = TaskKind::kMultiLabel;
  Vocabulary vocab;

  const std::vector<Document>& split(Split s) const;
  std::size_t size() const { return train.size() + valid.size() + test.size(); }
};

/// Lowercased tokens split on whitespace; each ASCII punctuation character
/// is a token of its own.
std::vector<std::string> tokenize(std::string_view text);

Vocabulary build_vocab(const std::vector<std::string>& texts, int min_freq = 1);
std::vector<int> encode_text(std::string_view text, const Vocabulary& vocab);
std::vector<std::string> decode_ids(const std::vector<int>& ids, const Vocabulary& vocab);

/// Builds the vocabulary from the train split and encodes every split.
Corpus build_corpus(const std::vector<RawDocument>& records, int class_count, TaskKind task_kind,
                    int min_freq = 1);
/// Encodes every split with a fixed vocabulary, e.g. one saved with a checkpoint.
Corpus encode_corpus(const std::vector<RawDocument>& records, int class_count, TaskKind task_kind,
                     Vocabulary vocab);

/// JSON lines with id/text/labels and either a per-line "split" field or a
/// sibling "<path>.splits.json" manifest {"train": [...], "valid": [...], "test": [...]}.
std::vector<RawDocument> read_jsonl_records(const std::filesystem::path& path, int class_count,
                                            TaskKind task_kind);
Corpus load_jsonl_corpus(const std::filesystem::path& path, int class_count, TaskKind task_kind);
void write_jsonl_records(std::ostream& out, const std::vector<RawDocument>& records);

struct SyntheticCorpusSpec {
  std::uint64_t seed = 1;
  int n_docs = 1000;
  int len_min = 20;
  int len_max = 640;
  int class_count = 4;
  TaskKind task_kind = TaskKind::kMultiLabel;
};

inline constexpr int kSyntheticFillerTokens = 200;

/// Length-correlated synthetic documents. Class c is positive iff its
/// signature token "sig<c>" is planted somewhere in the document. About one
/// token in ten is a marker "lenq<b>" naming the document's length quartile b,
/// and the last class's positive rate grows with b.
std::vector<RawDocument> generate_synthetic_records(const SyntheticCorpusSpec& spec);
Corpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec);

/// 70/15/15 assignment from a stable 64-bit FNV-1a hash of the id.
Split split_for_id(std::string_view id);
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace lamkit
