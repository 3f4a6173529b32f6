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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uemb/corpus.hpp"
#include "uemb/model.hpp"
#include "uemb/tensor.hpp"

namespace uemb::eval {

// --- metrics -------------------------------------------------------------------------
// All metrics return percentages without rounding.

struct Ranking {
  std::string query_id;
  std::vector<std::string> doc_ids;  // best first
};

// Ranks every document for every query by cosine similarity, ties broken by
// ascending doc id. queries [nq×d], docs [nd×d].
std::vector<Ranking> rank_by_cosine(const Tensor& queries,
                                    std::span<const std::string> query_ids,
                                    const Tensor& docs,
                                    std::span<const std::string> doc_ids);

// Relevant documents are those with grade >= 1.
double mrr_at_k(std::span<const Ranking> rankings, std::span<const Qrel> qrels,
                std::size_t k = 10);
double recall_at_k(std::span<const Ranking> rankings, std::span<const Qrel> qrels,
                   std::size_t k = 1000);
// Gain (2^grade - 1) / log2(rank + 1), normalised by the ideal ordering.
double ndcg_at_k(std::span<const Ranking> rankings, std::span<const Qrel> qrels,
                 std::size_t k = 10);

// Average ranks for ties.
std::vector<double> average_ranks(std::span<const double> x);
// Pearson correlation of the rank vectors, times 100.
double spearman(std::span<const double> x, std::span<const double> y);

// Softmax regression on frozen features (full-batch AdamW, lr 1e-2, 200
// epochs, decay 1e-4, seeded init); accuracy on the test split.
double linear_probe_accuracy(const Tensor& train_x,
                             std::span<const std::string> train_y,
                             const Tensor& test_x,
                             std::span<const std::string> test_y,
                             std::uint64_t seed = 0);

// Best F1 of "sim >= threshold" over thresholds drawn from the observed
// similarities. labels are 0/1.
double pair_best_f1(std::span<const double> sims, std::span<const int> labels);

struct BitextCandidate {
  std::string id_a;
  std::string id_b;
  double similarity = 0.0;
};

// Mutual nearest neighbours by cosine (ties broken by ascending id).
std::vector<BitextCandidate> mutual_nearest(const Tensor& a,
                                            std::span<const std::string> ids_a,
                                            const Tensor& b,
                                            std::span<const std::string> ids_b);

// F1 of the mutual-nearest candidates above the best threshold.
double bitext_f1(const Tensor& a, std::span<const std::string> ids_a,
                 const Tensor& b, std::span<const std::string> ids_b,
                 std::span<const GoldPair> gold);

// Mean-centred PCA onto the top two components, [n×2]. Each component's
// largest-magnitude loading is positive.
Tensor project_2d(const Tensor& x);

double round2(double v);

// --- tasks ---------------------------------------------------------------------------

enum class TaskKind { retrieval, sts, classification, pair_classification, bitext };
enum class Metric { mrr_at_10, recall_at_1000, ndcg_at_10, spearman, accuracy, best_f1, f1 };
enum class Symmetry { asym, sym };

std::string_view to_string(TaskKind k);
std::string_view to_string(Metric m);
std::string_view to_string(Symmetry s);
TaskKind parse_task_kind(std::string_view s);
Metric parse_metric(std::string_view s);
Symmetry parse_symmetry(std::string_view s);

struct TaskSpec {
  std::string name;
  TaskKind kind = TaskKind::retrieval;
  std::string language;
  Symmetry symmetry = Symmetry::asym;
  bool in_domain = true;
  Metric metric = Metric::mrr_at_10;
  // Data files by role:
  //   retrieval: queries, corpus, qrels     sts: data
  //   classification: train, test           pair_classification: data
  //   bitext: sents_a, sents_b, gold
  std::map<std::string, std::filesystem::path> paths;
  // Precomputed embedding stores by role, for evaluation without a model:
  //   retrieval: queries, corpus            sts / pair_classification: s1, s2
  //   classification: train, test           bitext: sents_a, sents_b
  std::map<std::string, std::filesystem::path> stores;
  // A raw score supplied directly in the manifest.
  std::optional<double> score;

  void validate() const;
};

struct Manifest {
  std::vector<TaskSpec> tasks;
};

// Keys are task.<name>.<field>; fields are kind, language, symmetry,
// in_domain, metric, score, path.<role>, store.<role>. Relative paths resolve
// against base_dir.
Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                        const std::string& source = "<manifest>");
Manifest load_manifest(const std::filesystem::path& path);

// Source of embeddings for raw texts.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual Tensor encode(std::span<const std::string> texts, InputType type) const = 0;
};

class ModelEncoder final : public TextEncoder {
 public:
  ModelEncoder(const Parameters& params, const Vocabulary& vocab)
      : params_(params), vocab_(vocab) {}
  Tensor encode(std::span<const std::string> texts, InputType type) const override;

 private:
  const Parameters& params_;
  const Vocabulary& vocab_;
};

// Raw score (percent, rounded to 2 decimals). A manifest score is returned
// as is; otherwise data is encoded with encoder, or read from the task's
// stores when encoder is null.
double run_task(const TaskSpec& spec, const TextEncoder* encoder);

// --- aggregation ---------------------------------------------------------------------

struct RawScore {
  std::string task;
  std::string language;
  TaskKind kind = TaskKind::retrieval;
  Symmetry symmetry = Symmetry::asym;
  bool in_domain = true;
  Metric metric = Metric::mrr_at_10;
  double score = 0.0;
};

struct LanguageScores {
  std::string language;
  double asym = 0.0;
  double sym = 0.0;
  double all = 0.0;
};

struct BenchmarkReport {
  std::vector<RawScore> raw;
  std::vector<LanguageScores> languages;  // sorted by language
  LanguageScores average;                 // language = "avg"
  std::map<std::string, std::string> provenance;
};

// asym = mean(in-domain retrieval, out-of-domain retrieval).
// sym  = mean over symmetric task kinds of (mean over domains of the task
//        scores of that kind and domain).
// all  = mean(asym, sym); average = unweighted mean over languages.
// Bitext tasks are reported but not aggregated.
BenchmarkReport aggregate(std::span<const RawScore> raw);

std::string report_json(const BenchmarkReport& report);
// task,language,kind,symmetry,in_domain,metric,score
std::string scores_csv(std::span<const RawScore> raw);
// language,asym,sym,all (with a final avg row)
std::string radar_csv(const BenchmarkReport& report);
std::vector<RawScore> parse_scores_csv(std::string_view text,
                                       const std::string& source = "<scores>");

// Writes report.json, scores.csv and radar.csv into dir.
void write_report(const BenchmarkReport& report, const std::filesystem::path& dir);

struct ProjectedPoint {
  std::string id;
  std::string lang;
  double x = 0.0;
  double y = 0.0;
};
std::string projection_csv(std::span<const ProjectedPoint> points);

}  // namespace uemb::eval
