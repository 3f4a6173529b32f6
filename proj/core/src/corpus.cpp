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

#include "uemb/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "jsonl.hpp"
#include "uemb/errors.hpp"

namespace uemb {

using detail::json;

std::string_view to_string(InputType t) {
  return t == InputType::query ? "query" : "document";
}

InputType parse_input_type(std::string_view s) {
  if (s == "query") return InputType::query;
  if (s == "document") return InputType::document;
  throw ConfigError("unknown input type '" + std::string(s) +
                    "' (expected query|document)");
}

PairFormat parse_pair_format(std::string_view s) {
  if (s == "asym") return PairFormat::asym;
  if (s == "sym") return PairFormat::sym;
  throw ConfigError("unknown pair format '" + std::string(s) +
                    "' (expected asym|sym)");
}

std::string_view to_string(PairFormat f) {
  return f == PairFormat::asym ? "asym" : "sym";
}

// --- vocabulary ----------------------------------------------------------------

Vocabulary::Vocabulary() { byte_to_id_.fill(token_ids::unk); }

Vocabulary::Vocabulary(std::vector<unsigned char> bytes)
    : bytes_(std::move(bytes)) {
  byte_to_id_.fill(token_ids::unk);
  for (std::size_t i = 0; i < bytes_.size(); ++i) {
    if (byte_to_id_[bytes_[i]] != token_ids::unk) {
      throw ContractError("vocabulary byte " + std::to_string(bytes_[i]) +
                          " listed twice");
    }
    byte_to_id_[bytes_[i]] = static_cast<int>(token_ids::reserved_count + i);
  }
}

std::string Vocabulary::token(int id) const {
  static const char* kReserved[] = {"<pad>",       "<unk>",
                                    "<bos_query>", "<eos_query>",
                                    "<bos_document>", "<eos_document>"};
  if (id < 0 || static_cast<std::size_t>(id) >= size()) {
    throw ContractError("token id " + std::to_string(id) + " out of range");
  }
  if (id < token_ids::reserved_count) return kReserved[id];
  return std::string(1, static_cast<char>(bytes_[id - token_ids::reserved_count]));
}

std::string Vocabulary::serialize() const {
  static const char* kHex = "0123456789abcdef";
  std::string out;
  for (unsigned char b : bytes_) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 15]);
  }
  return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    throw DataError("vocabulary: bad hex digit");
  };
  if (text.size() % 2) throw DataError("vocabulary: odd hex length");
  std::vector<unsigned char> bytes;
  for (std::size_t i = 0; i < text.size(); i += 2) {
    bytes.push_back(
        static_cast<unsigned char>(nibble(text[i]) * 16 + nibble(text[i + 1])));
  }
  return Vocabulary(std::move(bytes));
}

Vocabulary build_vocab(std::span<const std::string> corpus,
                       std::size_t max_size) {
  if (max_size <= static_cast<std::size_t>(token_ids::reserved_count)) {
    throw ConfigError("build_vocab: max_size must exceed " +
                      std::to_string(token_ids::reserved_count));
  }
  std::array<std::uint64_t, 256> counts{};
  for (const std::string& doc : corpus) {
    for (char c : doc) ++counts[static_cast<unsigned char>(c)];
  }
  std::vector<unsigned char> seen;
  for (int b = 0; b < 256; ++b) {
    if (counts[b]) seen.push_back(static_cast<unsigned char>(b));
  }
  std::stable_sort(seen.begin(), seen.end(),
                   [&](unsigned char a, unsigned char b) {
                     return counts[a] > counts[b];
                   });
  const std::size_t cap = max_size - token_ids::reserved_count;
  if (seen.size() > cap) seen.resize(cap);
  return Vocabulary(std::move(seen));
}

TokenIds encode_text(const Vocabulary& vocab, std::string_view text,
                     InputType type, std::size_t max_len) {
  if (max_len < 2) throw ContractError("encode_text: max_len must be >= 2");
  const std::size_t body = std::min(text.size(), max_len - 2);
  TokenIds ids;
  ids.reserve(body + 2);
  ids.push_back(token_ids::bos(type));
  for (std::size_t i = 0; i < body; ++i) {
    ids.push_back(vocab.id_of(static_cast<unsigned char>(text[i])));
  }
  ids.push_back(token_ids::eos(type));
  return ids;
}

std::string decode(const Vocabulary& vocab, std::span<const int> ids) {
  std::string out;
  for (int id : ids) {
    if (id < token_ids::reserved_count) {
      if (id == token_ids::unk) out.push_back('?');
      continue;
    }
    out += vocab.token(id);
  }
  return out;
}

// --- instances -------------------------------------------------------------------

TrainInstance build_instance(const PairRecord& record, const Vocabulary& vocab,
                             const InstanceOptions& options, Rng& rng,
                             std::size_t record_index) {
  const std::size_t n = options.n_negatives;
  if (n < 1) throw ConfigError("build_instance: need at least one negative");
  TrainInstance inst;
  inst.record_index = record_index;

  if (const auto* asym = std::get_if<AsymRecord>(&record)) {
    if (asym->negatives.size() < n) {
      throw DataError("record " + std::to_string(record_index) + " has " +
                      std::to_string(asym->negatives.size()) +
                      " negatives, need " + std::to_string(n));
    }
    inst.anchor = encode_text(vocab, asym->query, InputType::query, options.max_len);
    inst.positive =
        encode_text(vocab, asym->positive, InputType::document, options.max_len);
    for (std::size_t idx :
         sample_without_replacement(rng, asym->negatives.size(), n)) {
      inst.negatives.push_back(encode_text(vocab, asym->negatives[idx],
                                           InputType::document, options.max_len));
    }
    return inst;
  }

  const auto& sym = std::get<SymRecord>(record);
  inst.anchor = encode_text(vocab, sym.anchor, InputType::query, options.max_len);
  inst.positive =
      encode_text(vocab, sym.entailment, InputType::query, options.max_len);
  inst.negatives.push_back(
      encode_text(vocab, sym.contradiction, InputType::query, options.max_len));
  if (n == 1) return inst;

  std::vector<std::size_t> candidates;
  if (sym.pool) {
    for (std::size_t i = 0; i < sym.pool->size(); ++i) {
      const std::string& s = (*sym.pool)[i];
      if (s != sym.anchor && s != sym.entailment && s != sym.contradiction) {
        candidates.push_back(i);
      }
    }
  }
  if (candidates.size() < n - 1) {
    throw DataError("record " + std::to_string(record_index) +
                    ": distractor pool has " +
                    std::to_string(candidates.size()) +
                    " usable sentences, need " + std::to_string(n - 1));
  }
  for (std::size_t k : sample_without_replacement(rng, candidates.size(), n - 1)) {
    inst.negatives.push_back(encode_text(vocab, (*sym.pool)[candidates[k]],
                                         InputType::query, options.max_len));
  }
  return inst;
}

// --- loaders ---------------------------------------------------------------------

std::vector<PairRecord> load_pairs(const std::filesystem::path& path,
                                   PairFormat format) {
  std::vector<PairRecord> out;
  detail::for_each_jsonl(path, [&](const json& obj, std::size_t line) {
    if (format == PairFormat::asym) {
      AsymRecord r;
      r.query = detail::require_string(obj, "query", line);
      r.positive = detail::require_string(obj, "positive", line);
      if (auto it = obj.find("negatives"); it != obj.end()) {
        if (!it->is_array()) {
          throw SchemaError("line " + std::to_string(line) +
                            ": field negatives must be an array");
        }
        for (const json& neg : *it) {
          if (!neg.is_string()) {
            throw SchemaError("line " + std::to_string(line) +
                              ": field negatives must hold strings");
          }
          r.negatives.push_back(neg.get<std::string>());
        }
      }
      out.emplace_back(std::move(r));
    } else {
      SymRecord r;
      r.anchor = detail::require_string(obj, "anchor", line);
      r.entailment = detail::require_string(obj, "entailment", line);
      r.contradiction = detail::require_string(obj, "contradiction", line);
      out.emplace_back(std::move(r));
    }
  });
  return out;
}

void attach_shared_pool(std::vector<PairRecord>& records) {
  auto pool = std::make_shared<std::vector<std::string>>();
  std::unordered_set<std::string> seen;
  auto add = [&](const std::string& s) {
    if (seen.insert(s).second) pool->push_back(s);
  };
  for (const PairRecord& r : records) {
    if (const auto* sym = std::get_if<SymRecord>(&r)) {
      add(sym->anchor);
      add(sym->entailment);
      add(sym->contradiction);
    }
  }
  std::shared_ptr<const std::vector<std::string>> shared = pool;
  for (PairRecord& r : records) {
    if (auto* sym = std::get_if<SymRecord>(&r)) sym->pool = shared;
  }
}

std::vector<std::string> record_texts(std::span<const PairRecord> records) {
  std::vector<std::string> out;
  for (const PairRecord& r : records) {
    if (const auto* a = std::get_if<AsymRecord>(&r)) {
      out.push_back(a->query);
      out.push_back(a->positive);
      out.insert(out.end(), a->negatives.begin(), a->negatives.end());
    } else {
      const auto& s = std::get<SymRecord>(r);
      out.push_back(s.anchor);
      out.push_back(s.entailment);
      out.push_back(s.contradiction);
    }
  }
  return out;
}

std::vector<TextItem> load_text_items(const std::filesystem::path& path) {
  std::vector<TextItem> out;
  std::set<std::string> ids;
  detail::for_each_jsonl(path, [&](const json& obj, std::size_t line) {
    TextItem item{detail::require_string(obj, "id", line),
                  detail::require_string(obj, "text", line)};
    if (!ids.insert(item.id).second) {
      throw DataError(path.string() + ": line " + std::to_string(line) +
                      ": duplicate id " + item.id);
    }
    out.push_back(std::move(item));
  });
  return out;
}

std::vector<TextItem> load_encode_inputs(const std::filesystem::path& path) {
  std::vector<TextItem> out;
  std::set<std::string> ids;
  detail::for_each_jsonl(path, [&](const json& obj, std::size_t line) {
    TextItem item;
    item.text = detail::require_string(obj, "text", line);
    item.id = obj.contains("id") ? detail::require_string(obj, "id", line)
                                 : std::to_string(out.size());
    if (!ids.insert(item.id).second) {
      throw DataError(path.string() + ": line " + std::to_string(line) +
                      ": duplicate id " + item.id);
    }
    out.push_back(std::move(item));
  });
  return out;
}

std::vector<ParallelPair> load_parallel(const std::filesystem::path& path) {
  std::vector<ParallelPair> out;
  detail::for_each_jsonl(path, [&](const json& obj, std::size_t line) {
    ParallelPair p;
    p.id = detail::require_string(obj, "id", line);
    p.text_a = detail::require_string(obj, "a", line);
    p.text_b = detail::require_string(obj, "b", line);
    out.push_back(std::move(p));
  });
  return out;
}

namespace {

std::vector<std::vector<std::string>> read_tsv(const std::filesystem::path& path,
                                               std::size_t columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() != columns) {
      throw DataError(path.string() + ": line " + std::to_string(lineno) +
                      ": expected " + std::to_string(columns) +
                      " tab-separated fields");
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace

std::vector<Qrel> load_qrels(const std::filesystem::path& path) {
  std::vector<Qrel> out;
  std::size_t row = 0;
  for (auto& f : read_tsv(path, 3)) {
    ++row;
    int grade = 0;
    try {
      std::size_t used = 0;
      grade = std::stoi(f[2], &used);
      if (used != f[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError(path.string() + ": row " + std::to_string(row) +
                      ": grade must be an integer");
    }
    if (grade < 0) {
      throw DataError(path.string() + ": row " + std::to_string(row) +
                      ": grade must be >= 0");
    }
    out.push_back(Qrel{std::move(f[0]), std::move(f[1]), grade});
  }
  return out;
}

std::vector<StsPair> load_sts(const std::filesystem::path& path) {
  std::vector<StsPair> out;
  detail::for_each_jsonl(path, [&](const json& obj, std::size_t line) {
    out.push_back(StsPair{detail::require_string(obj, "s1", line),
                          detail::require_string(obj, "s2", line),
                          detail::require_number(obj, "score", line)});
  });
  return out;
}

std::vector<LabeledText> load_labeled(const std::filesystem::path& path) {
  std::vector<LabeledText> out;
  detail::for_each_jsonl(path, [&](const json& obj, std::size_t line) {
    out.push_back(LabeledText{detail::require_string(obj, "text", line),
                              detail::require_string(obj, "label", line)});
  });
  return out;
}

std::vector<LabeledPair> load_labeled_pairs(const std::filesystem::path& path) {
  std::vector<LabeledPair> out;
  detail::for_each_jsonl(path, [&](const json& obj, std::size_t line) {
    const double label = detail::require_number(obj, "label", line);
    if (label != 0.0 && label != 1.0) {
      throw SchemaError("line " + std::to_string(line) +
                        ": field label must be 0 or 1");
    }
    out.push_back(LabeledPair{detail::require_string(obj, "s1", line),
                              detail::require_string(obj, "s2", line),
                              static_cast<int>(label)});
  });
  return out;
}

std::vector<GoldPair> load_gold(const std::filesystem::path& path) {
  std::vector<GoldPair> out;
  for (auto& f : read_tsv(path, 2)) {
    out.push_back(GoldPair{std::move(f[0]), std::move(f[1])});
  }
  return out;
}

std::vector<std::string> jsonl_strings(const std::filesystem::path& path) {
  std::vector<std::string> out;
  std::function<void(const json&)> walk = [&](const json& v) {
    if (v.is_string()) {
      out.push_back(v.get<std::string>());
    } else if (v.is_array() || v.is_object()) {
      for (const json& c : v) walk(c);
    }
  };
  detail::for_each_jsonl(path, [&](const json& obj, std::size_t) { walk(obj); });
  return out;
}

// --- synthetic bilingual corpus ------------------------------------------------

namespace {

constexpr std::size_t kFactDigits = 6;
constexpr std::size_t kTrainNegatives = 15;
constexpr std::size_t kHardNegatives = 7;

// Aligned lexicons: word i of A "translates" to word i of B. A uses only the
// letters a-m, B only n-z, so the two languages share no letter bytes.
constexpr std::array<std::string_view, 20> kLexiconA = {
    "bad",  "cage", "dim",  "edge", "fable", "gim",   "hake",
    "jam",  "kale", "lime", "mace", "bead",  "each",  "face",
    "glade", "held", "jade", "back", "came", "deck"};
constexpr std::array<std::string_view, 20> kLexiconB = {
    "sort",  "pout",  "rust", "town", "stow", "vox",  "zoo",
    "prosy", "snow",  "worst", "toys", "spry", "puny", "nosy",
    "sunny", "tryst", "quo",  "wont", "your", "oust"};

// Query words come from the first half of the lexicon, document words from
// the second half.
enum class Template { query, document, query_ood, document_ood };

struct Rendering {
  Template tmpl;
  std::vector<std::size_t> words;
};

Rendering draw_rendering(Rng& rng, Template tmpl) {
  const std::size_t count = [&] {
    switch (tmpl) {
      case Template::query: return 2;
      case Template::document: return 4;
      case Template::query_ood: return 1;
      case Template::document_ood: return 5;
    }
    return 0;
  }();
  const bool query_side = tmpl == Template::query || tmpl == Template::query_ood;
  Rendering r{tmpl, {}};
  for (std::size_t i = 0; i < count; ++i) {
    r.words.push_back((query_side ? 0 : 10) + uniform_index(rng, 10));
  }
  return r;
}

std::string render(const Rendering& r, const std::string& digits, bool lang_b) {
  const auto& lex = lang_b ? kLexiconB : kLexiconA;
  auto w = [&](std::size_t i) { return std::string(lex[r.words[i]]); };
  switch (r.tmpl) {
    case Template::query:
      return w(0) + " " + w(1) + " " + digits;
    case Template::document:
      return w(0) + " " + w(1) + " " + digits + " " + w(2) + " " + w(3);
    case Template::query_ood:
      return digits + " " + w(0);
    case Template::document_ood:
      return w(0) + " " + digits + " " + w(1) + " " + w(2) + " " + w(3) + " " +
             w(4);
  }
  return digits;
}

std::string random_digits(Rng& rng) {
  std::string s;
  for (std::size_t i = 0; i < kFactDigits; ++i) {
    s.push_back(static_cast<char>('0' + uniform_index(rng, 10)));
  }
  return s;
}

std::size_t hamming(const std::string& a, const std::string& b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

RetrievalData make_retrieval(Rng& rng, const std::vector<std::string>& facts,
                             std::size_t n_queries, bool lang_b, bool ood) {
  RetrievalData data;
  const Template qt = ood ? Template::query_ood : Template::query;
  const Template dt = ood ? Template::document_ood : Template::document;
  for (std::size_t f = 0; f < facts.size(); ++f) {
    data.corpus.push_back(TextItem{"d" + std::to_string(f),
                                   render(draw_rendering(rng, dt), facts[f], lang_b)});
  }
  for (std::size_t q = 0; q < n_queries; ++q) {
    const std::size_t f = uniform_index(rng, facts.size());
    data.queries.push_back(TextItem{"q" + std::to_string(q),
                                    render(draw_rendering(rng, qt), facts[f], lang_b)});
    data.qrels.push_back(Qrel{"q" + std::to_string(q), "d" + std::to_string(f), 1});
  }
  return data;
}

// Pairs of digit strings at a controlled Hamming distance; the gold score is
// the number of agreeing positions.
std::vector<StsPair> make_sts(Rng& rng, std::size_t n, bool lang_b, bool ood) {
  std::vector<StsPair> out;
  const Template t = ood ? Template::document_ood : Template::query;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string a = random_digits(rng);
    std::string b = a;
    const std::size_t changes = uniform_index(rng, kFactDigits + 1);
    for (std::size_t pos : sample_without_replacement(rng, kFactDigits, changes)) {
      b[pos] = static_cast<char>('0' + (b[pos] - '0' + 1 + uniform_index(rng, 9)) % 10);
    }
    out.push_back(StsPair{render(draw_rendering(rng, t), a, lang_b),
                          render(draw_rendering(rng, t), b, lang_b),
                          static_cast<double>(kFactDigits - changes)});
  }
  return out;
}

// Label = leading digit of the rendered digit string.
// With cover_labels the leading digit cycles through 0-9 so that every class
// occurs once n >= 10.
std::vector<LabeledText> make_classification(Rng& rng, std::size_t n, bool lang_b,
                                             bool cover_labels) {
  std::vector<LabeledText> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string d = random_digits(rng);
    if (cover_labels) d[0] = static_cast<char>('0' + i % 10);
    out.push_back(LabeledText{render(draw_rendering(rng, Template::query), d, lang_b),
                              std::string(1, d[0])});
  }
  return out;
}

SyntheticLanguageBench make_bench(std::uint64_t seed, std::uint64_t lang_tag,
                                  const std::vector<std::string>& facts,
                                  std::size_t n_eval, bool lang_b) {
  SyntheticLanguageBench b;
  b.language = lang_b ? "B" : "A";
  Rng r1 = make_rng(seed, {lang_tag, 1});
  b.retrieval = make_retrieval(r1, facts, n_eval, lang_b, false);
  Rng r2 = make_rng(seed, {lang_tag, 2});
  b.retrieval_ood = make_retrieval(r2, facts, n_eval, lang_b, true);
  Rng r3 = make_rng(seed, {lang_tag, 3});
  b.sts = make_sts(r3, n_eval, lang_b, false);
  Rng r4 = make_rng(seed, {lang_tag, 4});
  b.sts_ood = make_sts(r4, n_eval, lang_b, true);
  Rng r5 = make_rng(seed, {lang_tag, 5});
  b.cls_train = make_classification(r5, 2 * n_eval, lang_b, true);
  Rng r6 = make_rng(seed, {lang_tag, 6});
  b.cls_test = make_classification(r6, n_eval, lang_b, false);
  return b;
}

}  // namespace

SyntheticCorpus generate_synthetic_bilingual(std::uint64_t seed,
                                             std::size_t n_facts,
                                             std::size_t n_train,
                                             std::size_t n_eval) {
  if (n_facts < 10) throw ConfigError("synthetic corpus needs n_facts >= 10");
  if (n_eval < 5) throw ConfigError("synthetic corpus needs n_eval >= 5");
  SyntheticCorpus c;

  Rng fact_rng = make_rng(seed, {0});
  std::set<std::string> seen;
  while (c.facts.size() < n_facts) {
    std::string d = random_digits(fact_rng);
    if (seen.insert(d).second) c.facts.push_back(std::move(d));
  }

  // Per-fact candidate negatives: the nearest facts by Hamming distance
  // (ties by index) plus random others.
  const std::size_t n_neg = std::min(kTrainNegatives, n_facts - 1);
  std::vector<std::vector<std::size_t>> neg_facts(n_facts);
  Rng neg_rng = make_rng(seed, {1});
  for (std::size_t f = 0; f < n_facts; ++f) {
    std::vector<std::size_t> others;
    for (std::size_t g = 0; g < n_facts; ++g) {
      if (g != f) others.push_back(g);
    }
    std::stable_sort(others.begin(), others.end(), [&](std::size_t a, std::size_t b) {
      return hamming(c.facts[f], c.facts[a]) < hamming(c.facts[f], c.facts[b]);
    });
    const std::size_t hard = std::min(kHardNegatives, n_neg);
    std::vector<std::size_t> chosen(others.begin(), others.begin() + hard);
    std::vector<std::size_t> rest(others.begin() + hard, others.end());
    for (std::size_t k : sample_without_replacement(neg_rng, rest.size(), n_neg - hard)) {
      chosen.push_back(rest[k]);
    }
    neg_facts[f] = std::move(chosen);
  }

  Rng train_rng = make_rng(seed, {2});
  for (std::size_t i = 0; i < n_train; ++i) {
    const std::size_t f = uniform_index(train_rng, n_facts);
    AsymRecord r;
    r.query = render(draw_rendering(train_rng, Template::query), c.facts[f], false);
    r.positive = render(draw_rendering(train_rng, Template::document), c.facts[f], false);
    for (std::size_t g : neg_facts[f]) {
      r.negatives.push_back(
          render(draw_rendering(train_rng, Template::document), c.facts[g], false));
    }
    c.train_a.push_back(std::move(r));
  }

  c.bench_a = make_bench(seed, 10, c.facts, n_eval, false);
  c.bench_b = make_bench(seed, 20, c.facts, n_eval, true);

  Rng par_rng = make_rng(seed, {3});
  for (std::size_t f = 0; f < n_facts; ++f) {
    const Rendering r = draw_rendering(par_rng, Template::document);
    c.parallel.push_back(ParallelPair{"p" + std::to_string(f),
                                      render(r, c.facts[f], false),
                                      render(r, c.facts[f], true), f});
  }
  const std::vector<std::size_t> perm = permutation(par_rng, n_facts);
  c.bitext_b.resize(n_facts);
  for (std::size_t i = 0; i < n_facts; ++i) {
    c.bitext_a.push_back(TextItem{"a" + std::to_string(i), c.parallel[i].text_a});
    // B sentence i lands at slot perm[i] with id b<perm[i]>.
    const std::string bid = "b" + std::to_string(perm[i]);
    c.bitext_b[perm[i]] = TextItem{bid, c.parallel[i].text_b};
    c.bitext_gold.push_back(GoldPair{"a" + std::to_string(i), bid});
  }
  return c;
}

namespace {

using ojson = nlohmann::ordered_json;

class LineWriter {
 public:
  explicit LineWriter(const std::filesystem::path& path)
      : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw DataError("cannot write " + path.string());
  }
  void json_line(const ojson& obj) { out_ << obj.dump() << '\n'; }
  void raw_line(const std::string& s) { out_ << s << '\n'; }

 private:
  std::ofstream out_;
};

void write_items(const std::filesystem::path& path, const std::vector<TextItem>& items) {
  LineWriter w(path);
  for (const auto& it : items) w.json_line(ojson{{"id", it.id}, {"text", it.text}});
}

void write_retrieval(const std::filesystem::path& dir, const RetrievalData& r) {
  std::filesystem::create_directories(dir);
  write_items(dir / "queries.jsonl", r.queries);
  write_items(dir / "corpus.jsonl", r.corpus);
  LineWriter q(dir / "qrels.tsv");
  for (const auto& x : r.qrels) {
    q.raw_line(x.query_id + "\t" + x.doc_id + "\t" + std::to_string(x.grade));
  }
}

void write_sts(const std::filesystem::path& path, const std::vector<StsPair>& pairs) {
  LineWriter w(path);
  for (const auto& p : pairs) {
    w.json_line(ojson{{"s1", p.s1}, {"s2", p.s2}, {"score", p.score}});
  }
}

void write_labeled(const std::filesystem::path& path,
                   const std::vector<LabeledText>& items) {
  LineWriter w(path);
  for (const auto& it : items) w.json_line(ojson{{"text", it.text}, {"label", it.label}});
}

void write_bench(const std::filesystem::path& dir, const SyntheticLanguageBench& b) {
  std::filesystem::create_directories(dir);
  write_retrieval(dir / "retrieval", b.retrieval);
  write_retrieval(dir / "retrieval_ood", b.retrieval_ood);
  write_sts(dir / "sts.jsonl", b.sts);
  write_sts(dir / "sts_ood.jsonl", b.sts_ood);
  write_labeled(dir / "cls_train.jsonl", b.cls_train);
  write_labeled(dir / "cls_test.jsonl", b.cls_test);
}

}  // namespace

void write_synthetic(const SyntheticCorpus& corpus,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    LineWriter w(dir / "train_a.jsonl");
    for (const AsymRecord& r : corpus.train_a) {
      w.json_line(ojson{{"query", r.query},
                        {"positive", r.positive},
                        {"negatives", r.negatives}});
    }
  }
  write_bench(dir / corpus.bench_a.language, corpus.bench_a);
  write_bench(dir / corpus.bench_b.language, corpus.bench_b);
  {
    LineWriter w(dir / "parallel.jsonl");
    for (const ParallelPair& p : corpus.parallel) {
      w.json_line(ojson{{"id", p.id}, {"a", p.text_a}, {"b", p.text_b}});
    }
  }
  std::filesystem::create_directories(dir / "bitext");
  write_items(dir / "bitext" / "sentsA.jsonl", corpus.bitext_a);
  write_items(dir / "bitext" / "sentsB.jsonl", corpus.bitext_b);
  LineWriter g(dir / "bitext" / "gold.tsv");
  for (const GoldPair& p : corpus.bitext_gold) g.raw_line(p.id_a + "\t" + p.id_b);
}

}  // namespace uemb
