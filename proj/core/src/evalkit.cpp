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

#include "uemb/evalkit.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "uemb/errors.hpp"
#include "uemb/flatconf.hpp"
#include "uemb/random.hpp"
#include "uemb/store.hpp"
#include "uemb/trainer.hpp"

namespace uemb::eval {

namespace {

using QrelIndex = std::map<std::string, std::map<std::string, int>>;

QrelIndex index_qrels(std::span<const Qrel> qrels) {
  QrelIndex idx;
  for (const Qrel& q : qrels) idx[q.query_id][q.doc_id] = q.grade;
  return idx;
}

const std::map<std::string, int>& judged(const QrelIndex& idx, const std::string& qid) {
  auto it = idx.find(qid);
  if (it == idx.end()) throw DataError("query '" + qid + "' has no qrels");
  return it->second;
}

std::size_t relevant_count(const std::map<std::string, int>& grades,
                           const std::string& qid) {
  std::size_t n = 0;
  for (const auto& [doc, g] : grades) n += g >= 1 ? 1 : 0;
  if (n == 0) throw DataError("query '" + qid + "' has no relevant document");
  return n;
}

void require_nonempty(std::span<const Ranking> rankings) {
  if (rankings.empty()) throw ContractError("metric over an empty set of queries");
}

// Rows scaled to unit length; a zero row is a ContractError.
Tensor unit_rows(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("expected a matrix, got " + shape_string(x.shape()));
  Tensor out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row_span(r);
    double ss = 0.0;
    for (double v : row) ss += v * v;
    if (!(ss > 0.0)) throw ContractError("cosine of a zero vector is undefined");
    const double inv = 1.0 / std::sqrt(ss);
    for (double& v : row) v *= inv;
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_rows(const Tensor& x, std::size_t n, const char* what) {
  if (x.rank() != 2 || x.shape()[0] != n) {
    throw DimensionError(std::string(what) + ": matrix " + shape_string(x.shape()) +
                         " does not have " + std::to_string(n) + " rows");
  }
}

}  // namespace

std::vector<Ranking> rank_by_cosine(const Tensor& queries,
                                    std::span<const std::string> query_ids,
                                    const Tensor& docs,
                                    std::span<const std::string> doc_ids) {
  check_rows(queries, query_ids.size(), "rank_by_cosine queries");
  check_rows(docs, doc_ids.size(), "rank_by_cosine docs");
  if (queries.shape()[1] != docs.shape()[1]) {
    throw DimensionError("rank_by_cosine: query and document widths differ");
  }
  const Tensor q = unit_rows(queries);
  const Tensor d = unit_rows(docs);
  std::vector<Ranking> out;
  out.reserve(query_ids.size());
  std::vector<double> sims(doc_ids.size());
  std::vector<std::size_t> order(doc_ids.size());
  for (std::size_t i = 0; i < query_ids.size(); ++i) {
    for (std::size_t j = 0; j < doc_ids.size(); ++j) sims[j] = dot(q.row_span(i), d.row_span(j));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (sims[a] != sims[b]) return sims[a] > sims[b];
      return doc_ids[a] < doc_ids[b];
    });
    Ranking r{query_ids[i], {}};
    r.doc_ids.reserve(order.size());
    for (std::size_t j : order) r.doc_ids.push_back(doc_ids[j]);
    out.push_back(std::move(r));
  }
  return out;
}

double mrr_at_k(std::span<const Ranking> rankings, std::span<const Qrel> qrels,
                std::size_t k) {
  require_nonempty(rankings);
  const QrelIndex idx = index_qrels(qrels);
  double total = 0.0;
  for (const Ranking& r : rankings) {
    const auto& grades = judged(idx, r.query_id);
    relevant_count(grades, r.query_id);
    const std::size_t depth = std::min(k, r.doc_ids.size());
    for (std::size_t i = 0; i < depth; ++i) {
      auto it = grades.find(r.doc_ids[i]);
      if (it != grades.end() && it->second >= 1) {
        total += 1.0 / static_cast<double>(i + 1);
        break;
      }
    }
  }
  return 100.0 * total / static_cast<double>(rankings.size());
}

double recall_at_k(std::span<const Ranking> rankings, std::span<const Qrel> qrels,
                   std::size_t k) {
  require_nonempty(rankings);
  const QrelIndex idx = index_qrels(qrels);
  double total = 0.0;
  for (const Ranking& r : rankings) {
    const auto& grades = judged(idx, r.query_id);
    const std::size_t n_rel = relevant_count(grades, r.query_id);
    const std::size_t depth = std::min(k, r.doc_ids.size());
    std::size_t hit = 0;
    for (std::size_t i = 0; i < depth; ++i) {
      auto it = grades.find(r.doc_ids[i]);
      hit += (it != grades.end() && it->second >= 1) ? 1 : 0;
    }
    total += static_cast<double>(hit) / static_cast<double>(n_rel);
  }
  return 100.0 * total / static_cast<double>(rankings.size());
}

double ndcg_at_k(std::span<const Ranking> rankings, std::span<const Qrel> qrels,
                 std::size_t k) {
  require_nonempty(rankings);
  const QrelIndex idx = index_qrels(qrels);
  auto gain = [](int grade) { return std::exp2(static_cast<double>(grade)) - 1.0; };
  auto discount = [](std::size_t rank) { return std::log2(static_cast<double>(rank) + 1.0); };
  double total = 0.0;
  for (const Ranking& r : rankings) {
    const auto& grades = judged(idx, r.query_id);
    std::vector<int> ideal;
    for (const auto& [doc, g] : grades) ideal.push_back(g);
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    if (ideal.empty() || ideal.front() <= 0) {
      throw ContractError("nDCG undefined for query '" + r.query_id +
                          "' with all-zero grades");
    }
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) {
      idcg += gain(ideal[i]) / discount(i + 1);
    }
    double dcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, r.doc_ids.size()); ++i) {
      auto it = grades.find(r.doc_ids[i]);
      if (it != grades.end()) dcg += gain(it->second) / discount(i + 1);
    }
    total += dcg / idcg;
  }
  return 100.0 * total / static_cast<double>(rankings.size());
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("spearman: lengths differ");
  if (x.size() < 2) throw ContractError("spearman needs at least 2 points");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) {
    throw ContractError("spearman undefined for a constant vector");
  }
  return 100.0 * sxy / std::sqrt(sxx * syy);
}

double linear_probe_accuracy(const Tensor& train_x,
                             std::span<const std::string> train_y,
                             const Tensor& test_x,
                             std::span<const std::string> test_y,
                             std::uint64_t seed) {
  check_rows(train_x, train_y.size(), "linear probe train");
  check_rows(test_x, test_y.size(), "linear probe test");
  if (train_x.shape()[1] != test_x.shape()[1]) {
    throw DimensionError("linear probe: train and test widths differ");
  }
  const std::vector<std::string> classes = [&] {
    std::set<std::string> s(train_y.begin(), train_y.end());
    return std::vector<std::string>(s.begin(), s.end());
  }();
  if (classes.size() < 2) throw DataError("linear probe needs at least 2 training classes");
  auto class_of = [&](const std::string& label) {
    auto it = std::lower_bound(classes.begin(), classes.end(), label);
    if (it == classes.end() || *it != label) {
      throw DataError("test label '" + label + "' does not occur in training data");
    }
    return static_cast<std::size_t>(it - classes.begin());
  };
  std::vector<std::size_t> test_cls;
  for (const auto& y : test_y) test_cls.push_back(class_of(y));
  std::vector<std::size_t> train_cls;
  for (const auto& y : train_y) train_cls.push_back(class_of(y));

  const std::size_t n = train_x.rows();
  const std::size_t d = train_x.shape()[1];
  const std::size_t c = classes.size();
  std::map<std::string, Tensor> w;
  {
    Rng rng = make_rng(seed, {0x70726f6265ULL});
    Tensor weight({c, d});
    for (double& v : weight.storage()) v = 0.01 * standard_normal(rng);
    w.emplace("probe.weight", std::move(weight));
    w.emplace("probe.bias", Tensor({c}));
  }
  TrainConfig opt;
  opt.weight_decay = 1e-4;
  AdamWState state;
  std::vector<double> logits(c);

  auto scores_of = [&](std::span<const double> x) {
    const Tensor& W = w.at("probe.weight");
    const Tensor& b = w.at("probe.bias");
    for (std::size_t k = 0; k < c; ++k) logits[k] = b[k] + dot(W.row_span(k), x);
  };

  for (int epoch = 0; epoch < 200; ++epoch) {
    std::map<std::string, Tensor> g;
    Tensor gw({c, d});
    Tensor gb({c});
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = train_x.row_span(i);
      scores_of(x);
      const double m = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double& v : logits) z += (v = std::exp(v - m));
      for (std::size_t k = 0; k < c; ++k) {
        const double coef =
            (logits[k] / z - (k == train_cls[i] ? 1.0 : 0.0)) / static_cast<double>(n);
        gb[k] += coef;
        auto row = gw.row_span(k);
        for (std::size_t j = 0; j < d; ++j) row[j] += coef * x[j];
      }
    }
    g.emplace("probe.weight", std::move(gw));
    g.emplace("probe.bias", std::move(gb));
    adamw_step(w, g, state, 1e-2, opt);
  }

  if (test_y.empty()) throw ContractError("linear probe: empty test set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_y.size(); ++i) {
    scores_of(test_x.row_span(i));
    const auto best = static_cast<std::size_t>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
    correct += best == test_cls[i] ? 1 : 0;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(test_y.size());
}

double pair_best_f1(std::span<const double> sims, std::span<const int> labels) {
  if (sims.size() != labels.size()) throw DimensionError("pair_best_f1: lengths differ");
  std::size_t positives = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw ContractError("pair labels must be 0 or 1");
    positives += static_cast<std::size_t>(l);
  }
  if (positives == 0 || positives == labels.size()) {
    throw ContractError("pair_best_f1 needs both labels present");
  }
  std::vector<std::size_t> order(sims.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
  double best = 0.0;
  std::size_t tp = 0, predicted = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    tp += static_cast<std::size_t>(labels[order[i]]);
    ++predicted;
    if (i + 1 < order.size() && sims[order[i + 1]] == sims[order[i]]) continue;
    const double f1 = 2.0 * static_cast<double>(tp) /
                      static_cast<double>(predicted + positives);
    best = std::max(best, f1);
  }
  return 100.0 * best;
}

std::vector<BitextCandidate> mutual_nearest(const Tensor& a,
                                            std::span<const std::string> ids_a,
                                            const Tensor& b,
                                            std::span<const std::string> ids_b) {
  check_rows(a, ids_a.size(), "bitext A");
  check_rows(b, ids_b.size(), "bitext B");
  if (ids_a.empty() || ids_b.empty()) return {};
  if (a.shape()[1] != b.shape()[1]) throw DimensionError("bitext: widths differ");
  const Tensor ua = unit_rows(a);
  const Tensor ub = unit_rows(b);
  const std::size_t na = ids_a.size(), nb = ids_b.size();
  std::vector<double> sim(na * nb);
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) sim[i * nb + j] = dot(ua.row_span(i), ub.row_span(j));
  }
  std::vector<std::size_t> best_b(na), best_a(nb);
  for (std::size_t i = 0; i < na; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < nb; ++j) {
      const double s = sim[i * nb + j], t = sim[i * nb + best];
      if (s > t || (s == t && ids_b[j] < ids_b[best])) best = j;
    }
    best_b[i] = best;
  }
  for (std::size_t j = 0; j < nb; ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < na; ++i) {
      const double s = sim[i * nb + j], t = sim[best * nb + j];
      if (s > t || (s == t && ids_a[i] < ids_a[best])) best = i;
    }
    best_a[j] = best;
  }
  std::vector<BitextCandidate> out;
  for (std::size_t i = 0; i < na; ++i) {
    if (best_a[best_b[i]] == i) {
      out.push_back({ids_a[i], ids_b[best_b[i]], sim[i * nb + best_b[i]]});
    }
  }
  std::sort(out.begin(), out.end(), [](const BitextCandidate& x, const BitextCandidate& y) {
    return x.id_a < y.id_a;
  });
  return out;
}

double bitext_f1(const Tensor& a, std::span<const std::string> ids_a,
                 const Tensor& b, std::span<const std::string> ids_b,
                 std::span<const GoldPair> gold) {
  if (gold.empty()) throw ContractError("bitext_f1 needs a nonempty gold set");
  std::set<std::pair<std::string, std::string>> gold_set;
  for (const GoldPair& g : gold) gold_set.emplace(g.id_a, g.id_b);
  auto candidates = mutual_nearest(a, ids_a, b, ids_b);
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const BitextCandidate& x, const BitextCandidate& y) {
                     return x.similarity > y.similarity;
                   });
  double best = 0.0;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    tp += gold_set.count({candidates[i].id_a, candidates[i].id_b});
    if (i + 1 < candidates.size() &&
        candidates[i + 1].similarity == candidates[i].similarity) {
      continue;
    }
    const double f1 = 2.0 * static_cast<double>(tp) /
                      static_cast<double>(i + 1 + gold_set.size());
    best = std::max(best, f1);
  }
  return 100.0 * best;
}

Tensor project_2d(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("project_2d expects a matrix");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  if (n < 3) throw ContractError("project_2d needs at least 3 points");
  if (d < 2) throw ContractError("project_2d needs at least 2 dimensions");
  Eigen::MatrixXd m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) m(i, j) = x.at(i, j);
  }
  const Eigen::RowVectorXd mean = m.colwise().mean();
  m.rowwise() -= mean;
  const Eigen::MatrixXd cov = (m.transpose() * m) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error("project_2d: eigen decomposition failed");
  Eigen::MatrixXd comps(d, 2);
  comps.col(0) = solver.eigenvectors().col(d - 1);
  comps.col(1) = solver.eigenvectors().col(d - 2);
  for (int c = 0; c < 2; ++c) {
    Eigen::Index arg = 0;
    comps.col(c).cwiseAbs().maxCoeff(&arg);
    if (comps(arg, c) < 0.0) comps.col(c) *= -1.0;
  }
  const Eigen::MatrixXd proj = m * comps;
  Tensor out({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    out.at(i, 0) = proj(i, 0);
    out.at(i, 1) = proj(i, 1);
  }
  return out;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

// --- tasks ---------------------------------------------------------------------------

std::string_view to_string(TaskKind k) {
  switch (k) {
    case TaskKind::retrieval: return "retrieval";
    case TaskKind::sts: return "sts";
    case TaskKind::classification: return "classification";
    case TaskKind::pair_classification: return "pair_classification";
    case TaskKind::bitext: return "bitext";
  }
  return "?";
}

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::mrr_at_10: return "mrr@10";
    case Metric::recall_at_1000: return "recall@1000";
    case Metric::ndcg_at_10: return "ndcg@10";
    case Metric::spearman: return "spearman";
    case Metric::accuracy: return "accuracy";
    case Metric::best_f1: return "best_f1";
    case Metric::f1: return "f1";
  }
  return "?";
}

std::string_view to_string(Symmetry s) { return s == Symmetry::asym ? "asym" : "sym"; }

TaskKind parse_task_kind(std::string_view s) {
  for (auto k : {TaskKind::retrieval, TaskKind::sts, TaskKind::classification,
                 TaskKind::pair_classification, TaskKind::bitext}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown task kind '" + std::string(s) + "'");
}

Metric parse_metric(std::string_view s) {
  for (auto m : {Metric::mrr_at_10, Metric::recall_at_1000, Metric::ndcg_at_10,
                 Metric::spearman, Metric::accuracy, Metric::best_f1, Metric::f1}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown metric '" + std::string(s) + "'");
}

Symmetry parse_symmetry(std::string_view s) {
  if (s == "asym") return Symmetry::asym;
  if (s == "sym") return Symmetry::sym;
  throw ConfigError("unknown symmetry '" + std::string(s) + "'");
}

namespace {

bool metric_fits(TaskKind k, Metric m) {
  switch (k) {
    case TaskKind::retrieval:
      return m == Metric::mrr_at_10 || m == Metric::recall_at_1000 || m == Metric::ndcg_at_10;
    case TaskKind::sts: return m == Metric::spearman;
    case TaskKind::classification: return m == Metric::accuracy;
    case TaskKind::pair_classification: return m == Metric::best_f1;
    case TaskKind::bitext: return m == Metric::f1;
  }
  return false;
}

Metric default_metric(TaskKind k) {
  switch (k) {
    case TaskKind::retrieval: return Metric::mrr_at_10;
    case TaskKind::sts: return Metric::spearman;
    case TaskKind::classification: return Metric::accuracy;
    case TaskKind::pair_classification: return Metric::best_f1;
    case TaskKind::bitext: return Metric::f1;
  }
  return Metric::mrr_at_10;
}

bool plain_token(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
}

void check_shape(const std::string& name, TaskKind kind, Symmetry symmetry, Metric metric,
                 const std::string& language) {
  if (!plain_token(name)) throw ConfigError("invalid task name '" + name + "'");
  if (!plain_token(language)) {
    throw ConfigError("task " + name + ": invalid language '" + language + "'");
  }
  if (!metric_fits(kind, metric)) {
    throw ConfigError("task " + name + ": metric " + std::string(to_string(metric)) +
                      " does not apply to " + std::string(to_string(kind)) + " tasks");
  }
  if (kind == TaskKind::retrieval && symmetry != Symmetry::asym) {
    throw ConfigError("task " + name + ": retrieval tasks are asym");
  }
  if ((kind == TaskKind::sts || kind == TaskKind::classification ||
       kind == TaskKind::pair_classification) &&
      symmetry != Symmetry::sym) {
    throw ConfigError("task " + name + ": " + std::string(to_string(kind)) +
                      " tasks are sym");
  }
}

}  // namespace

void TaskSpec::validate() const { check_shape(name, kind, symmetry, metric, language); }

Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                        const std::string& source) {
  const FlatConfig cfg = FlatConfig::parse(text, source);
  struct Draft {
    TaskSpec spec;
    bool has_kind = false, has_symmetry = false, has_metric = false;
  };
  std::vector<std::string> order;
  std::map<std::string, Draft> drafts;
  for (const FlatEntry& e : cfg.entries()) {
    const auto fail = [&](const std::string& msg) {
      return ConfigError(cfg.where(e) + ": " + msg);
    };
    if (e.key.rfind("task.", 0) != 0) throw fail("unknown key '" + e.key + "'");
    const std::string rest = e.key.substr(5);
    const auto dot_pos = rest.find('.');
    if (dot_pos == std::string::npos) throw fail("expected task.<name>.<field>");
    const std::string name = rest.substr(0, dot_pos);
    const std::string field = rest.substr(dot_pos + 1);
    if (!drafts.count(name)) {
      order.push_back(name);
      drafts[name].spec.name = name;
    }
    Draft& d = drafts[name];
    TaskSpec& s = d.spec;
    try {
      if (field == "kind") {
        s.kind = parse_task_kind(e.value);
        d.has_kind = true;
      } else if (field == "language") {
        s.language = e.value;
      } else if (field == "symmetry") {
        s.symmetry = parse_symmetry(e.value);
        d.has_symmetry = true;
      } else if (field == "metric") {
        s.metric = parse_metric(e.value);
        d.has_metric = true;
      } else if (field == "in_domain") {
        s.in_domain = parse_flag(cfg, e);
      } else if (field == "score") {
        s.score = parse_real(cfg, e);
      } else if (field.rfind("path.", 0) == 0 && field.size() > 5) {
        s.paths[field.substr(5)] = base_dir / e.value;
      } else if (field.rfind("store.", 0) == 0 && field.size() > 6) {
        s.stores[field.substr(6)] = base_dir / e.value;
      } else {
        throw fail("unknown key '" + e.key + "'");
      }
    } catch (const ConfigError& err) {
      const std::string msg = err.what();
      if (msg.rfind(cfg.source(), 0) == 0) throw;
      throw fail(msg);
    }
  }
  Manifest m;
  for (const std::string& name : order) {
    Draft& d = drafts[name];
    if (!d.has_kind) throw ConfigError(source + ": task " + name + " has no kind");
    if (d.spec.language.empty()) throw ConfigError(source + ": task " + name + " has no language");
    if (!d.has_symmetry) {
      d.spec.symmetry = d.spec.kind == TaskKind::retrieval ? Symmetry::asym : Symmetry::sym;
    }
    if (!d.has_metric) d.spec.metric = default_metric(d.spec.kind);
    d.spec.validate();
    m.tasks.push_back(std::move(d.spec));
  }
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str(), path.parent_path(), path.string());
}

Tensor ModelEncoder::encode(std::span<const std::string> texts, InputType type) const {
  return encode_all(params_, vocab_, texts, type);
}

namespace {

const std::filesystem::path& role_path(const std::map<std::string, std::filesystem::path>& m,
                                       const TaskSpec& spec, const std::string& role,
                                       const char* prefix) {
  auto it = m.find(role);
  if (it == m.end()) {
    throw DataError("task " + spec.name + ": missing " + prefix + "." + role);
  }
  return it->second;
}

struct Side {
  Tensor emb;
  std::vector<std::string> ids;
};

Side store_side(const TaskSpec& spec, const std::string& role, std::size_t expected_rows) {
  const EmbeddingStore s = read_store(role_path(spec.stores, spec, role, "store"));
  if (expected_rows != SIZE_MAX && s.count() != expected_rows) {
    throw DataError("task " + spec.name + ": store " + role + " has " +
                    std::to_string(s.count()) + " rows, data has " +
                    std::to_string(expected_rows));
  }
  return Side{s.to_tensor(), s.ids};
}

std::vector<double> row_cosines(const Tensor& a, const Tensor& b) {
  const Tensor ua = unit_rows(a);
  const Tensor ub = unit_rows(b);
  std::vector<double> out(ua.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dot(ua.row_span(i), ub.row_span(i));
  return out;
}

template <typename T, typename F>
std::vector<std::string> project(const std::vector<T>& xs, F f) {
  std::vector<std::string> out;
  out.reserve(xs.size());
  for (const T& x : xs) out.push_back(f(x));
  return out;
}

double compute(const TaskSpec& spec, const TextEncoder* enc) {
  const auto path = [&](const std::string& role) -> const std::filesystem::path& {
    return role_path(spec.paths, spec, role, "path");
  };
  switch (spec.kind) {
    case TaskKind::retrieval: {
      const auto qrels = load_qrels(path("qrels"));
      Side q, d;
      if (enc) {
        const auto queries = load_text_items(path("queries"));
        const auto corpus = load_text_items(path("corpus"));
        q = {enc->encode(project(queries, [](auto& t) { return t.text; }), InputType::query),
             project(queries, [](auto& t) { return t.id; })};
        d = {enc->encode(project(corpus, [](auto& t) { return t.text; }), InputType::document),
             project(corpus, [](auto& t) { return t.id; })};
      } else {
        q = store_side(spec, "queries", SIZE_MAX);
        d = store_side(spec, "corpus", SIZE_MAX);
      }
      const auto rankings = rank_by_cosine(q.emb, q.ids, d.emb, d.ids);
      switch (spec.metric) {
        case Metric::recall_at_1000: return recall_at_k(rankings, qrels, 1000);
        case Metric::ndcg_at_10: return ndcg_at_k(rankings, qrels, 10);
        default: return mrr_at_k(rankings, qrels, 10);
      }
    }
    case TaskKind::sts: {
      const auto pairs = load_sts(path("data"));
      Tensor a, b;
      if (enc) {
        a = enc->encode(project(pairs, [](auto& p) { return p.s1; }), InputType::query);
        b = enc->encode(project(pairs, [](auto& p) { return p.s2; }), InputType::query);
      } else {
        a = store_side(spec, "s1", pairs.size()).emb;
        b = store_side(spec, "s2", pairs.size()).emb;
      }
      std::vector<double> gold;
      for (const auto& p : pairs) gold.push_back(p.score);
      return spearman(row_cosines(a, b), gold);
    }
    case TaskKind::classification: {
      const auto train = load_labeled(path("train"));
      const auto test = load_labeled(path("test"));
      Tensor a, b;
      if (enc) {
        a = enc->encode(project(train, [](auto& t) { return t.text; }), InputType::query);
        b = enc->encode(project(test, [](auto& t) { return t.text; }), InputType::query);
      } else {
        a = store_side(spec, "train", train.size()).emb;
        b = store_side(spec, "test", test.size()).emb;
      }
      return linear_probe_accuracy(a, project(train, [](auto& t) { return t.label; }), b,
                                   project(test, [](auto& t) { return t.label; }));
    }
    case TaskKind::pair_classification: {
      const auto pairs = load_labeled_pairs(path("data"));
      Tensor a, b;
      if (enc) {
        a = enc->encode(project(pairs, [](auto& p) { return p.s1; }), InputType::query);
        b = enc->encode(project(pairs, [](auto& p) { return p.s2; }), InputType::query);
      } else {
        a = store_side(spec, "s1", pairs.size()).emb;
        b = store_side(spec, "s2", pairs.size()).emb;
      }
      std::vector<int> labels;
      for (const auto& p : pairs) labels.push_back(p.label);
      return pair_best_f1(row_cosines(a, b), labels);
    }
    case TaskKind::bitext: {
      const auto gold = load_gold(path("gold"));
      Side a, b;
      if (enc) {
        const auto sa = load_text_items(path("sents_a"));
        const auto sb = load_text_items(path("sents_b"));
        a = {enc->encode(project(sa, [](auto& t) { return t.text; }), InputType::query),
             project(sa, [](auto& t) { return t.id; })};
        b = {enc->encode(project(sb, [](auto& t) { return t.text; }), InputType::query),
             project(sb, [](auto& t) { return t.id; })};
      } else {
        a = store_side(spec, "sents_a", SIZE_MAX);
        b = store_side(spec, "sents_b", SIZE_MAX);
      }
      return bitext_f1(a.emb, a.ids, b.emb, b.ids, gold);
    }
  }
  throw ContractError("unknown task kind");
}

}  // namespace

double run_task(const TaskSpec& spec, const TextEncoder* encoder) {
  spec.validate();
  if (spec.score) return *spec.score;
  return round2(compute(spec, encoder));
}

// --- aggregation ---------------------------------------------------------------------

namespace {

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

BenchmarkReport aggregate(std::span<const RawScore> raw) {
  if (raw.empty()) throw AggregationError("no tasks to aggregate");
  BenchmarkReport report;
  report.raw.assign(raw.begin(), raw.end());

  // language -> kind -> in_domain -> scores
  std::map<std::string, std::map<TaskKind, std::map<bool, std::vector<double>>>> by_lang;
  for (const RawScore& r : raw) {
    check_shape(r.task, r.kind, r.symmetry, r.metric, r.language);
    if (r.kind != TaskKind::bitext) by_lang[r.language][r.kind][r.in_domain].push_back(r.score);
  }

  if (by_lang.empty()) throw AggregationError("no aggregable tasks (bitext is not aggregated)");
  std::vector<std::string> gaps;
  for (const auto& [lang, kinds] : by_lang) {
    auto has = [&](TaskKind k, bool in_domain) {
      auto it = kinds.find(k);
      return it != kinds.end() && it->second.count(in_domain) > 0;
    };
    auto need = [&](TaskKind k, bool in_domain, const char* what) {
      if (!has(k, in_domain)) gaps.push_back(lang + ": " + what);
    };
    need(TaskKind::retrieval, true, "in-domain retrieval");
    need(TaskKind::retrieval, false, "out-of-domain retrieval");
    const bool natural = kinds.count(TaskKind::sts) || kinds.count(TaskKind::classification);
    const bool code = kinds.count(TaskKind::pair_classification) > 0;
    if (!natural && !code) gaps.push_back(lang + ": symmetric tasks");
    if (natural) {
      need(TaskKind::sts, true, "in-domain sts");
      need(TaskKind::sts, false, "out-of-domain sts");
      if (!kinds.count(TaskKind::classification)) gaps.push_back(lang + ": classification");
    }
    if (code) {
      need(TaskKind::pair_classification, true, "in-domain pair_classification");
      need(TaskKind::pair_classification, false, "out-of-domain pair_classification");
    }
  }
  if (!gaps.empty()) {
    std::string msg = "missing tasks: ";
    for (std::size_t i = 0; i < gaps.size(); ++i) msg += (i ? "; " : "") + gaps[i];
    throw AggregationError(msg);
  }

  std::vector<double> asyms, syms, alls;
  for (const auto& [lang, kinds] : by_lang) {
    const auto& retrieval = kinds.at(TaskKind::retrieval);
    const double asym = 0.5 * (mean(retrieval.at(true)) + mean(retrieval.at(false)));
    std::vector<double> per_kind;
    for (const auto& [kind, domains] : kinds) {
      if (kind == TaskKind::retrieval) continue;
      std::vector<double> per_domain;
      for (const auto& [in_domain, scores] : domains) per_domain.push_back(mean(scores));
      per_kind.push_back(mean(per_domain));
    }
    const double sym = mean(per_kind);
    report.languages.push_back({lang, asym, sym, 0.5 * (asym + sym)});
    asyms.push_back(asym);
    syms.push_back(sym);
    alls.push_back(report.languages.back().all);
  }
  report.average = {"avg", mean(asyms), mean(syms), mean(alls)};
  return report;
}

namespace {

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", round2(v));
  return buf;
}

}  // namespace

std::string report_json(const BenchmarkReport& report) {
  using json = nlohmann::ordered_json;
  json out;
  json raw = json::array();
  for (const RawScore& r : report.raw) {
    raw.push_back({{"task", r.task},
                   {"language", r.language},
                   {"kind", to_string(r.kind)},
                   {"symmetry", to_string(r.symmetry)},
                   {"in_domain", r.in_domain},
                   {"metric", to_string(r.metric)},
                   {"score", round2(r.score)}});
  }
  out["raw"] = raw;
  json langs = json::array();
  for (const LanguageScores& l : report.languages) {
    langs.push_back({{"language", l.language},
                     {"asym", round2(l.asym)},
                     {"sym", round2(l.sym)},
                     {"all", round2(l.all)}});
  }
  out["languages"] = langs;
  out["average"] = {{"asym", round2(report.average.asym)},
                    {"sym", round2(report.average.sym)},
                    {"all", round2(report.average.all)}};
  json prov = json::object();
  for (const auto& [k, v] : report.provenance) prov[k] = v;
  out["provenance"] = prov;
  return out.dump(2) + "\n";
}

std::string scores_csv(std::span<const RawScore> raw) {
  std::string out = "task,language,kind,symmetry,in_domain,metric,score\n";
  for (const RawScore& r : raw) {
    out += r.task + "," + r.language + "," + std::string(to_string(r.kind)) + "," +
           std::string(to_string(r.symmetry)) + "," + (r.in_domain ? "true" : "false") +
           "," + std::string(to_string(r.metric)) + "," + fixed2(r.score) + "\n";
  }
  return out;
}

std::string radar_csv(const BenchmarkReport& report) {
  std::string out = "language,asym,sym,all\n";
  auto row = [&](const LanguageScores& l) {
    out += l.language + "," + fixed2(l.asym) + "," + fixed2(l.sym) + "," + fixed2(l.all) + "\n";
  };
  for (const LanguageScores& l : report.languages) row(l);
  row(report.average);
  return out;
}

std::vector<RawScore> parse_scores_csv(std::string_view text, const std::string& source) {
  std::vector<RawScore> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto at = [&](const std::string& msg) {
      return DataError(source + ": line " + std::to_string(lineno) + ": " + msg);
    };
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (lineno == 1) {
      if (line != "task,language,kind,symmetry,in_domain,metric,score") {
        throw at("expected header task,language,kind,symmetry,in_domain,metric,score");
      }
      continue;
    }
    if (f.size() != 7) throw at("expected 7 fields");
    RawScore r;
    try {
      r.task = f[0];
      r.language = f[1];
      r.kind = parse_task_kind(f[2]);
      r.symmetry = parse_symmetry(f[3]);
      if (f[4] != "true" && f[4] != "false") throw ConfigError("in_domain must be true or false");
      r.in_domain = f[4] == "true";
      r.metric = parse_metric(f[5]);
      const auto* end = f[6].data() + f[6].size();
      auto res = std::from_chars(f[6].data(), end, r.score);
      if (res.ec != std::errc() || res.ptr != end || !std::isfinite(r.score)) {
        throw ConfigError("bad score '" + f[6] + "'");
      }
      check_shape(r.task, r.kind, r.symmetry, r.metric, r.language);
    } catch (const ConfigError& e) {
      throw at(e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_report(const BenchmarkReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::string& body) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    out << body;
  };
  write("report.json", report_json(report));
  write("scores.csv", scores_csv(report.raw));
  write("radar.csv", radar_csv(report));
}

std::string projection_csv(std::span<const ProjectedPoint> points) {
  std::string out = "id,lang,x,y\n";
  char buf[96];
  for (const ProjectedPoint& p : points) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", p.x, p.y);
    out += p.id + "," + p.lang + "," + buf + "\n";
  }
  return out;
}

}  // namespace uemb::eval
