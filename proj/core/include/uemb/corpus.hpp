// Copyright 2026 The uemb Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "uemb/random.hpp"

namespace uemb {

// Role of a text when encoded. Everything is a query unless it is the
// corpus side of a retrieval task.
enum class InputType { query, document };

std::string_view to_string(InputType t);
InputType parse_input_type(std::string_view s);

namespace token_ids {
inline constexpr int pad = 0;
inline constexpr int unk = 1;
inline constexpr int bos_query = 2;
inline constexpr int eos_query = 3;
inline constexpr int bos_document = 4;
inline constexpr int eos_document = 5;
inline constexpr int reserved_count = 6;
// Typed boundary tokens occupy a contiguous id range.
inline constexpr int first_special = bos_query;
inline constexpr int special_count = 4;

inline constexpr int bos(InputType t) {
  return t == InputType::query ? bos_query : bos_document;
}
inline constexpr int eos(InputType t) {
  return t == InputType::query ? eos_query : eos_document;
}
inline constexpr bool is_eos(int id) {
  return id == eos_query || id == eos_document;
}
inline constexpr bool is_bos(int id) {
  return id == bos_query || id == bos_document;
}
}  // namespace token_ids

// Byte-level vocabulary: six reserved ids followed by single-byte tokens.
class Vocabulary {
 public:
  // Reserved ids only.
  Vocabulary();
  // Byte tokens in id order, appended after the reserved ids.
  explicit Vocabulary(std::vector<unsigned char> bytes);

  std::size_t size() const { return token_ids::reserved_count + bytes_.size(); }
  int id_of(unsigned char byte) const { return byte_to_id_[byte]; }
  bool contains(unsigned char byte) const {
    return byte_to_id_[byte] != token_ids::unk;
  }
  // Token text; reserved ids render as "<bos_query>" and friends.
  std::string token(int id) const;
  const std::vector<unsigned char>& bytes() const { return bytes_; }

  std::string serialize() const;  // hex bytes, single line
  static Vocabulary deserialize(std::string_view text);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.bytes_ == b.bytes_;
  }

 private:
  std::vector<unsigned char> bytes_;
  std::array<int, 256> byte_to_id_{};
};

// Bytes ranked by descending frequency, ties by ascending byte value,
// capped so that the vocabulary holds at most max_size ids.
Vocabulary build_vocab(std::span<const std::string> corpus,
                       std::size_t max_size);

using TokenIds = std::vector<int>;

// [bos_t] + body (truncated to max_len - 2) + [eos_t].
TokenIds encode_text(const Vocabulary& vocab, std::string_view text,
                     InputType type = InputType::query,
                     std::size_t max_len = 64);

// Inverse of encode_text on the body: boundary tokens are dropped, unknown
// ids render as '?'.
std::string decode(const Vocabulary& vocab, std::span<const int> ids);

// --- training records --------------------------------------------------------

struct AsymRecord {
  std::string query;
  std::string positive;
  std::vector<std::string> negatives;
};

struct SymRecord {
  std::string anchor;
  std::string entailment;
  std::string contradiction;
  // Distractor sentences shared across a dataset (see attach_shared_pool).
  std::shared_ptr<const std::vector<std::string>> pool;
};

using PairRecord = std::variant<AsymRecord, SymRecord>;

enum class PairFormat { asym, sym };
PairFormat parse_pair_format(std::string_view s);
std::string_view to_string(PairFormat f);

struct TrainInstance {
  TokenIds anchor;
  TokenIds positive;
  std::vector<TokenIds> negatives;
  std::size_t record_index = 0;

  std::size_t n_negatives() const { return negatives.size(); }
};

struct InstanceOptions {
  std::size_t n_negatives = 7;
  std::size_t max_len = 64;
};

// Asymmetric: N negatives without replacement from the record's own list,
// texts other than the query encoded as documents. Symmetric: the
// contradiction first, then N-1 pool sentences without replacement,
// excluding the record's own three sentences; everything typed query.
TrainInstance build_instance(const PairRecord& record, const Vocabulary& vocab,
                             const InstanceOptions& options, Rng& rng,
                             std::size_t record_index = 0);

// Reads JSON Lines pair data. Blank lines are skipped; errors name the
// 1-based line number.
std::vector<PairRecord> load_pairs(const std::filesystem::path& path,
                                   PairFormat format);

// Gives every symmetric record the same de-duplicated pool made of all
// anchor/entailment/contradiction sentences, in first-seen order.
void attach_shared_pool(std::vector<PairRecord>& records);

// Every text carried by the records (for vocabulary building).
std::vector<std::string> record_texts(std::span<const PairRecord> records);

// --- evaluation data ---------------------------------------------------------

struct TextItem {
  std::string id;
  std::string text;
};

struct Qrel {
  std::string query_id;
  std::string doc_id;
  int grade = 1;
};

struct StsPair {
  std::string s1;
  std::string s2;
  double score = 0.0;
};

struct LabeledText {
  std::string text;
  std::string label;
};

struct LabeledPair {
  std::string s1;
  std::string s2;
  int label = 0;  // 1 = same / duplicate
};

struct GoldPair {
  std::string id_a;
  std::string id_b;
};

std::vector<TextItem> load_text_items(const std::filesystem::path& path);
std::vector<Qrel> load_qrels(const std::filesystem::path& path);
std::vector<StsPair> load_sts(const std::filesystem::path& path);
std::vector<LabeledText> load_labeled(const std::filesystem::path& path);
std::vector<LabeledPair> load_labeled_pairs(const std::filesystem::path& path);
std::vector<GoldPair> load_gold(const std::filesystem::path& path);

// Inputs to batch encoding: {"text"} with optional unique "id" (defaults to
// the 0-based row index).
std::vector<TextItem> load_encode_inputs(const std::filesystem::path& path);

// Collects every string field of every JSON object in a JSON Lines file.
std::vector<std::string> jsonl_strings(const std::filesystem::path& path);

// --- synthetic bilingual corpus ---------------------------------------------

struct RetrievalData {
  std::vector<TextItem> queries;
  std::vector<TextItem> corpus;
  std::vector<Qrel> qrels;
};

struct ParallelPair {
  std::string id;
  std::string text_a;
  std::string text_b;
  std::size_t fact = 0;
};

struct SyntheticLanguageBench {
  std::string language;
  RetrievalData retrieval;      // in-domain templates
  RetrievalData retrieval_ood;  // held-out templates
  std::vector<StsPair> sts;
  std::vector<StsPair> sts_ood;
  std::vector<LabeledText> cls_train;
  std::vector<LabeledText> cls_test;
};

struct SyntheticCorpus {
  std::vector<std::string> facts;  // digit strings
  std::vector<AsymRecord> train_a;
  SyntheticLanguageBench bench_a;
  SyntheticLanguageBench bench_b;
  std::vector<ParallelPair> parallel;
  // Bitext view of `parallel` with B shuffled; gold maps A ids to B ids.
  std::vector<TextItem> bitext_a;
  std::vector<TextItem> bitext_b;
  std::vector<GoldPair> bitext_gold;
};

// {"id", "a", "b"} rows as written by write_synthetic.
std::vector<ParallelPair> load_parallel(const std::filesystem::path& path);

// Each latent fact is a digit string. Sentences wrap the digits in
// language-specific function words (A and B use disjoint letters), so the
// digits are the only tokens the two languages share. Classification labels
// are the leading digit; the training split covers all ten. Needs
// n_facts >= 10 and n_eval >= 5.
SyntheticCorpus generate_synthetic_bilingual(std::uint64_t seed,
                                             std::size_t n_facts,
                                             std::size_t n_train,
                                             std::size_t n_eval);

// Writes the corpus as JSON Lines / TSV files under dir (layout in
// README.md). Output bytes depend only on the corpus.
void write_synthetic(const SyntheticCorpus& corpus,
                     const std::filesystem::path& dir);

}  // namespace uemb
