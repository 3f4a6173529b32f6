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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "oracles.hpp"
#include "test_support.hpp"
#include "uemb/errors.hpp"
#include "uemb/evalkit.hpp"
#include "uemb/gradcheck.hpp"
#include "uemb/objective.hpp"
#include "uemb/runconfig.hpp"
#include "uemb/store.hpp"
#include "uemb/trainer.hpp"

namespace fs = std::filesystem;

namespace uemb::acceptance {
namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Captured {
  int code = 0;
  std::string out;
  std::string err;
};

Captured capture(const std::function<int(cli::Io)>& f) {
  std::ostringstream out, err;
  Captured c;
  c.code = f(cli::Io{out, err});
  c.out = out.str();
  c.err = err.str();
  return c;
}

// --- 1. aggregation fixture ----------------------------------------------------------

eval::RawScore raw(const std::string& task, const std::string& lang, eval::TaskKind kind,
                   bool in_domain, double score) {
  using eval::Metric;
  using eval::TaskKind;
  eval::RawScore r;
  r.task = task;
  r.language = lang;
  r.kind = kind;
  r.in_domain = in_domain;
  r.symmetry = kind == TaskKind::retrieval ? eval::Symmetry::asym : eval::Symmetry::sym;
  r.metric = kind == TaskKind::retrieval          ? Metric::mrr_at_10
             : kind == TaskKind::sts              ? Metric::spearman
             : kind == TaskKind::classification   ? Metric::accuracy
                                                  : Metric::best_f1;
  r.score = score;
  return r;
}

Outcome aggregation_fixture() {
  using eval::TaskKind;
  std::vector<eval::RawScore> scores;
  auto natural = [&](const std::string& lang, double r1, double r2, double s1, double s2,
                     double cls) {
    scores.push_back(raw(lang + "_mmarco", lang, TaskKind::retrieval, true, r1));
    scores.push_back(raw(lang + "_miracl", lang, TaskKind::retrieval, false, r2));
    scores.push_back(raw(lang + "_sts", lang, TaskKind::sts, true, s1));
    scores.push_back(raw(lang + "_sts17", lang, TaskKind::sts, false, s2));
    scores.push_back(raw(lang + "_massive", lang, TaskKind::classification, true, cls));
  };
  natural("en", 38.49, 47.44, 85.15, 89.85, 67.80);
  natural("zh", 26.27, 49.66, 78.89, 86.90, 67.01);
  scores.push_back(raw("csn", "java", TaskKind::retrieval, true, 83.09));
  scores.push_back(raw("xcodeeval", "java", TaskKind::retrieval, false, 18.31));
  scores.push_back(raw("bigclone", "java", TaskKind::pair_classification, true, 45.96));
  scores.push_back(raw("gcj", "java", TaskKind::pair_classification, false, 68.33));

  const std::map<std::string, std::array<double, 3>> expected{
      {"en", {42.97, 77.65, 60.31}},
      {"zh", {37.96, 74.95, 56.46}},
      {"java", {50.70, 57.14, 53.92}}};
  const auto report = eval::aggregate(scores);
  Outcome o{report.languages.size() == expected.size(), ""};
  double worst = 0.0;
  for (const auto& l : report.languages) {
    const auto& e = expected.at(l.language);
    for (double diff : {l.asym - e[0], l.sym - e[1], l.all - e[2]}) {
      worst = std::max(worst, std::abs(diff));
    }
    o.detail += l.language + " " + fmt("%.3f", l.asym) + "/" + fmt("%.3f", l.sym) + "/" +
                fmt("%.3f", l.all) + "; ";
  }
  o.pass = o.pass && worst <= 0.01 + 1e-12;
  o.detail += "max deviation " + fmt("%.4f", worst);
  return o;
}

// --- 2. gradient correctness ---------------------------------------------------------

Outcome gradient_check(const fs::path& work) {
  fs::create_directories(work);
  RunConfig cfg;
  cfg.gradcheck.trials = 20;
  const fs::path conf = work / "gradcheck.conf";
  std::ofstream(conf) << dump_run_config(cfg);
  const auto r = capture([&](cli::Io io) { return cli::cmd_gradcheck(conf, io); });
  const auto pos = r.out.find("max relative error: ");
  double worst = std::nan("");
  if (pos != std::string::npos) worst = std::stod(r.out.substr(pos + 20));
  std::size_t trials = std::count(r.out.begin(), r.out.end(), '\n') - 1;
  return {r.code == cli::kExitOk && worst < 1e-4 && trials >= 20,
          std::to_string(trials) + " trials, max relative error " + fmt("%.3e", worst) +
              ", exit " + std::to_string(r.code)};
}

// --- 3. GradCache exactness ----------------------------------------------------------

// Largest per-weight max|a-b| divided by that weight's gradient magnitude.
// Weights whose true gradient vanishes fall back to a floor of 1e-12 times
// the largest gradient anywhere.
double grad_rel_diff(const std::map<std::string, Tensor>& a,
                     const std::map<std::string, Tensor>& b) {
  double global = 0;
  for (const auto& [name, t] : b) {
    for (double v : t.values()) global = std::max(global, std::abs(v));
  }
  double worst = 0;
  for (const auto& [name, ta] : a) {
    const Tensor& tb = b.at(name);
    double diff = 0, scale = 1e-12 * global;
    for (std::size_t i = 0; i < ta.size(); ++i) {
      diff = std::max(diff, std::abs(ta[i] - tb[i]));
      scale = std::max({scale, std::abs(ta[i]), std::abs(tb[i])});
    }
    worst = std::max(worst, diff / scale);
  }
  return worst;
}

Outcome gradcache_exactness() {
  const ModelConfig model;
  Outcome o{true, ""};
  double worst = 0;
  for (AdapterMode mode : {AdapterMode::full, AdapterMode::lora}) {
    Rng rng = make_rng(3, {static_cast<std::uint64_t>(mode)});
    const AdapterConfig ac{mode, 8, 8.0};
    Parameters p = init_parameters(model, 3);
    if (mode == AdapterMode::lora) {
      p = attach_lora(p, ac, rng);
      for (auto& [name, t] : p.weights) {
        if (name.ends_with(".lora_b")) {
          for (double& v : t.values()) v = 0.02 * standard_normal(rng);
        }
      }
    }
    p.adapter = ac;
    const auto batch = random_instances(rng, 8, 7, 8, model.vocab_size);
    const auto trainable = trainable_set(p, ac);
    const auto ref = single_pass_gradients(p, batch, trainable, 0.05);
    std::set<double> losses;
    for (std::size_t chunk : {1u, 2u, 4u, 8u}) {
      const auto gc = grad_cache_gradients(p, batch, chunk, trainable, 0.05);
      losses.insert(gc.loss);
      const double e = grad_rel_diff(gc.grads, ref.grads);
      worst = std::max(worst, e);
      o.pass = o.pass && e < 1e-6 && gc.grads.size() == ref.grads.size();
    }
    o.pass = o.pass && losses.size() == 1;
    o.detail += std::string(to_string(mode)) + ": " + std::to_string(losses.size()) +
                " distinct loss value(s); ";
  }
  o.detail += "max gradient relative error " + fmt("%.3e", worst);
  return o;
}

// --- 4. LoRA identity and merge ------------------------------------------------------

Outcome lora_identity(const fs::path& work) {
  const fs::path dir = work / "lora_identity";
  cli::SynthFlags flags;
  flags.facts = 20;
  flags.train = 20;
  flags.eval = 12;
  const auto s = capture([&](cli::Io io) { return cli::cmd_synth(flags, dir, io); });
  if (s.code != 0) return {false, "synth failed: " + s.err};

  const RunConfig cfg = load_run_config(dir / "train.conf");
  std::vector<std::string> texts;
  for (const auto& r : load_pairs(cfg.paths.train_data, cfg.data_format)) {
    for (auto& t : record_texts(std::vector<PairRecord>{r})) texts.push_back(std::move(t));
  }
  for (const auto& p : cfg.paths.vocab_sources) {
    for (auto& t : jsonl_strings(p)) texts.push_back(std::move(t));
  }
  const Vocabulary vocab = build_vocab(texts, cfg.model.vocab_size);
  const Parameters base = init_parameters(cfg.model, 11);
  Rng rng = make_rng(11, {1});
  Parameters lora = attach_lora(base, cfg.adapter, rng);

  const eval::Manifest manifest = eval::load_manifest(cfg.bench.manifest);
  const eval::ModelEncoder base_enc(base, vocab), lora_enc(lora, vocab);
  std::size_t equal = 0;
  for (const auto& t : manifest.tasks) {
    if (eval::run_task(t, &base_enc) == eval::run_task(t, &lora_enc)) ++equal;
  }

  for (auto& [name, t] : lora.weights) {
    if (name.ends_with(".lora_b")) {
      for (double& v : t.values()) v = 0.05 * standard_normal(rng);
    }
  }
  const auto parallel = load_parallel(cfg.bench.projection);
  std::vector<std::string> sents;
  for (const auto& p : parallel) {
    sents.push_back(p.text_a);
    sents.push_back(p.text_b);
  }
  const Parameters merged = merge_lora(lora);
  double merge_diff = 0, adapter_effect = 0;
  for (InputType type : {InputType::query, InputType::document}) {
    const Tensor u = encode_all(lora, vocab, sents, type);
    const Tensor m = encode_all(merged, vocab, sents, type);
    const Tensor b = encode_all(base, vocab, sents, type);
    for (std::size_t i = 0; i < u.size(); ++i) {
      merge_diff = std::max(merge_diff, std::abs(u[i] - m[i]));
      adapter_effect = std::max(adapter_effect, std::abs(u[i] - b[i]));
    }
  }
  return {equal == manifest.tasks.size() && merge_diff < 1e-9 && adapter_effect > 1e-6,
          std::to_string(equal) + "/" + std::to_string(manifest.tasks.size()) +
              " task scores identical at zero init; merged vs unmerged max abs " +
              fmt("%.3e", merge_diff) + " (adapter shifts embeddings by " +
              fmt("%.3e", adapter_effect) + ")"};
}

// --- 5. loss sanity ------------------------------------------------------------------

std::vector<double> unit_at(double theta) { return {std::cos(theta), std::sin(theta), 0.0}; }

Outcome loss_sanity() {
  const auto anchor = unit_at(0.0);
  const auto same = unit_at(0.7);
  std::vector<std::span<const double>> negs(7, std::span<const double>(same));
  const double equal = infonce(anchor, same, negs, 0.05);
  const double err = std::abs(equal - std::log(8.0));

  bool monotone = true;
  double prev = 0;
  for (int i = 0; i <= 400; ++i) {
    const auto pos = unit_at(std::numbers::pi * (1.0 - i / 400.0));
    const double l = infonce(anchor, pos, negs, 0.05);
    if (i > 0 && !(l < prev)) monotone = false;
    prev = l;
  }
  return {err < 1e-9 && monotone, "equal-similarity loss " + fmt("%.12f", equal) +
                                      " (|diff from ln 8| " + fmt("%.1e", err) + "), " +
                                      (monotone ? "strictly" : "NOT strictly") +
                                      " decreasing over 401 positive similarities"};
}

// --- 6. schedule fixture -------------------------------------------------------------

Outcome schedule_fixture() {
  TrainConfig c;
  c.total_steps = 1000;
  const double warm = lr_at(c.warmup_steps(), c);
  const double last = lr_at(c.total_steps, c);
  const double mid = lr_at((c.warmup_steps() + c.total_steps) / 2, c);
  return {warm == 5e-5 && last == 5e-6 && std::abs(mid - 2.75e-5) < 1e-12,
          "warmup end " + fmt("%.17g", warm) + ", final " + fmt("%.17g", last) +
              ", midpoint " + fmt("%.17g", mid)};
}

// --- 7. metric oracles ---------------------------------------------------------------

Tensor rows_with_duplicates(Rng& rng, std::size_t n, std::size_t d) {
  const Tensor pool = testing::random_matrix(rng, std::max<std::size_t>(1, n / 2), d);
  std::uniform_int_distribution<std::size_t> pick(0, pool.rows() - 1);
  Tensor out({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t p = pick(rng);
    for (std::size_t c = 0; c < d; ++c) out.at(i, c) = pool.at(p, c);
  }
  return out;
}

std::vector<std::string> shuffled_ids(Rng& rng, const std::string& prefix, std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i * 7 + 3));
  std::shuffle(ids.begin(), ids.end(), rng);
  return ids;
}

Outcome metric_oracles() {
  Rng rng = make_rng(7, {});
  constexpr int kTrials = 150;
  std::map<std::string, std::size_t> checked;
  std::map<std::string, double> worst;
  bool ranks_exact = true;
  auto note = [&](const std::string& m, double lib, double ref) {
    ++checked[m];
    worst[m] = std::max(worst[m], std::abs(lib - ref));
  };
  std::uniform_int_distribution<std::size_t> nq(1, 5), nd(2, 20), dim(2, 5);
  std::uniform_int_distribution<int> grade(0, 3), level(-4, 4), small(0, 5);
  std::bernoulli_distribution use(0.3), coin(0.5);
  std::normal_distribution<double> noise(0.0, 0.6);
  for (int trial = 0; trial < kTrials; ++trial) {
    oracle::RetrievalCase c;
    const std::size_t d = dim(rng);
    c.queries = testing::random_matrix(rng, nq(rng), d);
    c.docs = rows_with_duplicates(rng, nd(rng), d);
    c.query_ids = shuffled_ids(rng, "q", c.queries.rows());
    c.doc_ids = shuffled_ids(rng, "d", c.docs.rows());
    for (const std::string& q : c.query_ids) {
      const std::string& sure = c.doc_ids[trial % c.doc_ids.size()];
      for (const std::string& doc : c.doc_ids) {
        if (doc != sure && use(rng)) c.qrels.push_back({q, doc, grade(rng)});
      }
      c.qrels.push_back({q, sure, 1 + grade(rng) % 3});
    }
    const auto rankings = eval::rank_by_cosine(c.queries, c.query_ids, c.docs, c.doc_ids);
    for (std::size_t q = 0; q < rankings.size(); ++q) {
      const auto expected = oracle::ranks(c.queries, q, c.docs, c.doc_ids);
      for (std::size_t pos = 0; pos < rankings[q].doc_ids.size(); ++pos) {
        ranks_exact = ranks_exact && expected.at(rankings[q].doc_ids[pos]) == pos + 1;
      }
    }
    note("mrr@10", eval::mrr_at_k(rankings, c.qrels, 10), oracle::mrr(c, 10));
    note("recall@5", eval::recall_at_k(rankings, c.qrels, 5), oracle::recall(c, 5));
    note("ndcg@10", eval::ndcg_at_k(rankings, c.qrels, 10), oracle::ndcg(c, 10));

    const std::size_t n = nd(rng);
    std::vector<double> x(n), y(n), sims(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = small(rng);
      y[i] = small(rng);
      sims[i] = level(rng) / 4.0;
      labels[i] = coin(rng);
    }
    x[0] = 0;
    x[1] = 6;
    y[0] = 0;
    y[1] = 6;
    labels[0] = 1;
    labels[n - 1] = 0;
    note("spearman", eval::spearman(x, y), oracle::spearman(x, y));
    note("best_f1", eval::pair_best_f1(sims, labels), oracle::pair_best_f1(sims, labels));

    const std::size_t na = nd(rng) % 15 + 2, nb = nd(rng) % 15 + 2;
    const Tensor a = rows_with_duplicates(rng, na, 4);
    Tensor b({nb, 4});
    std::uniform_int_distribution<std::size_t> src(0, na - 1);
    for (std::size_t j = 0; j < nb; ++j) {
      const std::size_t s = src(rng);
      for (std::size_t k = 0; k < 4; ++k) b.at(j, k) = a.at(s, k) + noise(rng);
    }
    const auto ia = shuffled_ids(rng, "a", na);
    const auto ib = shuffled_ids(rng, "b", nb);
    std::vector<GoldPair> gold;
    for (std::size_t k = 0; k < std::min(na, nb); ++k) gold.push_back({ia[k], ib[k]});
    note("bitext_f1", eval::bitext_f1(a, ia, b, ib, gold), oracle::bitext_f1(a, ia, b, ib, gold));
  }
  Outcome o{ranks_exact, ranks_exact ? "rankings exact; " : "ranking mismatch; "};
  for (const auto& [m, w] : worst) {
    o.pass = o.pass && w <= 1e-10 && checked[m] >= 100;
    o.detail += m + " max diff " + fmt("%.1e", w) + " over " + std::to_string(checked[m]) + "; ";
  }
  return o;
}

// --- 8. desk-scale transfer ----------------------------------------------------------

struct TraceStats {
  std::vector<double> losses;
  double first10() const {
    double s = 0;
    for (std::size_t i = 0; i < 10; ++i) s += losses[i];
    return s / 10;
  }
  double last10() const {
    double s = 0;
    for (std::size_t i = losses.size() - 10; i < losses.size(); ++i) s += losses[i];
    return s / 10;
  }
  bool finite() const {
    return std::all_of(losses.begin(), losses.end(), [](double v) { return std::isfinite(v); });
  }
};

TraceStats read_trace(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  std::getline(in, line);
  TraceStats t;
  while (std::getline(in, line)) t.losses.push_back(std::stod(line.substr(line.rfind(',') + 1)));
  return t;
}

std::map<std::string, double> read_scores(const fs::path& p) {
  std::map<std::string, double> out;
  for (const auto& r : eval::parse_scores_csv(slurp(p), p.string())) out[r.task] = r.score;
  return out;
}

// Mean distance between the A and B projections of each parallel pair, and
// the same divided by the mean distance over all point pairs.
std::pair<double, double> within_pair_distance(const fs::path& projection) {
  std::istringstream in(slurp(projection));
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::map<std::string, std::pair<double, double>>> pts;
  std::vector<std::pair<double, double>> all;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string id, lang, x, y;
    std::getline(ss, id, ',');
    std::getline(ss, lang, ',');
    std::getline(ss, x, ',');
    std::getline(ss, y, ',');
    pts[id][lang] = {std::stod(x), std::stod(y)};
    all.push_back({std::stod(x), std::stod(y)});
  }
  auto dist = [](std::pair<double, double> a, std::pair<double, double> b) {
    return std::hypot(a.first - b.first, a.second - b.second);
  };
  double within = 0;
  for (const auto& [id, langs] : pts) within += dist(langs.at("A"), langs.at("B"));
  within /= static_cast<double>(pts.size());
  double overall = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j, ++count) overall += dist(all[i], all[j]);
  }
  return {within, within / (overall / static_cast<double>(count))};
}

struct Experiment {
  fs::path synth;
  fs::path trained_conf;
  fs::path baseline_conf;
};

Outcome desk_scale(const fs::path& work, Experiment& exp) {
  exp.synth = work / "synthetic";
  fs::remove_all(exp.synth);
  cli::SynthFlags flags;
  flags.seed = 0;
  flags.facts = 50;
  const auto s = capture([&](cli::Io io) { return cli::cmd_synth(flags, exp.synth, io); });
  if (s.code != 0) return {false, "synth failed: " + s.err};
  exp.trained_conf = exp.synth / "train.conf";

  RunConfig base = load_run_config(exp.trained_conf);
  base.paths.checkpoint = exp.synth / "base/model.ueck";
  base.paths.trace = exp.synth / "base/trace.csv";
  base.paths.report_dir = exp.synth / "base/report";
  exp.baseline_conf = exp.synth / "baseline.conf";
  std::ofstream(exp.baseline_conf) << dump_run_config(base);
  const RunConfig trained = load_run_config(exp.trained_conf);

  const auto t = capture([&](cli::Io io) { return cli::cmd_train(exp.trained_conf, {}, io); });
  if (t.code != 0) return {false, "training failed: " + t.err};
  cli::TrainFlags untrained;
  untrained.stop_at = 0;
  const auto b = capture([&](cli::Io io) { return cli::cmd_train(exp.baseline_conf, untrained, io); });
  if (b.code != 0) return {false, "baseline checkpoint failed: " + b.err};
  for (const fs::path& conf : {exp.trained_conf, exp.baseline_conf}) {
    const auto e = capture([&](cli::Io io) { return cli::cmd_eval(conf, false, io); });
    if (e.code != 0) return {false, "eval failed: " + e.err};
  }

  const TraceStats trace = read_trace(trained.paths.trace);
  const auto after = read_scores(trained.paths.report_dir / "scores.csv");
  const auto before = read_scores(base.paths.report_dir / "scores.csv");
  const auto [d_after, r_after] = within_pair_distance(trained.paths.report_dir / "projection.csv");
  const auto [d_before, r_before] = within_pair_distance(base.paths.report_dir / "projection.csv");

  const bool a = trace.losses.size() == 300 && trace.finite() && trace.last10() < trace.first10();
  const bool bb = after.at("a_retrieval") >= 90.0;
  const bool c = after.at("b_retrieval") > before.at("b_retrieval");
  const bool d = d_after < d_before;
  auto mark = [](bool ok) { return ok ? "ok" : "FAILED"; };
  return {a && bb && c && d,
          std::string("(a) loss ") + fmt("%.4f", trace.first10()) + " -> " +
              fmt("%.4f", trace.last10()) + " " + mark(a) + "; (b) A MRR@10 " +
              fmt("%.2f", after.at("a_retrieval")) + " >= 90 " + mark(bb) + "; (c) B MRR@10 " +
              fmt("%.2f", after.at("b_retrieval")) + " vs untrained " +
              fmt("%.2f", before.at("b_retrieval")) + " " + mark(c) +
              "; (d) within-pair distance " + fmt("%.3f", d_after) + " vs untrained " +
              fmt("%.3f", d_before) + " (relative to mean spread " + fmt("%.3f", r_after) +
              " vs " + fmt("%.3f", r_before) + ") " + mark(d)};
}

// --- 9. ablation modes ---------------------------------------------------------------

Dataset load_dataset(const RunConfig& cfg) {
  Dataset d;
  d.records = load_pairs(cfg.paths.train_data, cfg.data_format);
  std::vector<std::string> texts = record_texts(d.records);
  for (const auto& p : cfg.paths.vocab_sources) {
    for (auto& t : jsonl_strings(p)) texts.push_back(std::move(t));
  }
  d.vocab = build_vocab(texts, cfg.model.vocab_size);
  return d;
}

Outcome ablations(const fs::path& work, Experiment& exp) {
  if (exp.trained_conf.empty()) {
    exp.synth = work / "synthetic";
    cli::SynthFlags flags;
    const auto s = capture([&](cli::Io io) { return cli::cmd_synth(flags, exp.synth, io); });
    if (s.code != 0) return {false, "synth failed: " + s.err};
    exp.trained_conf = exp.synth / "train.conf";
  }
  const RunConfig recipe = load_run_config(exp.trained_conf);
  const Dataset data = load_dataset(recipe);
  Outcome o{true, ""};
  int runs = 0;
  for (Pooling pooling : {Pooling::last_token, Pooling::weighted_mean}) {
    for (std::size_t negatives : {1u, 7u}) {
      for (AdapterMode mode : {AdapterMode::full, AdapterMode::lora, AdapterMode::bitfit}) {
        RunConfig cfg = recipe;
        cfg.model.pooling = pooling;
        cfg.train.n_negatives = negatives;
        cfg.adapter.mode = mode;
        const std::string label = std::string(to_string(pooling)) + "/N=" +
                                  std::to_string(negatives) + "/" +
                                  std::string(to_string(mode));
        const Checkpoint start = initial_checkpoint(cfg.model, cfg.adapter, cfg.train, data.vocab);
        TrainResult result;
        try {
          result = train(data, start);
        } catch (const NumericalAbort& e) {
          o.pass = false;
          o.detail += label + " aborted (" + e.what() + "); ";
          continue;
        }
        ++runs;
        TraceStats t;
        for (const auto& row : result.trace) t.losses.push_back(row.loss);
        bool frozen_ok = true;
        if (mode != AdapterMode::full) {
          const auto trainable = trainable_set(start.params, cfg.adapter);
          const std::set<std::string> names(trainable.begin(), trainable.end());
          for (const auto& [name, w] : start.params.weights) {
            if (names.contains(name)) continue;
            const Tensor& after = result.checkpoint.params.at(name);
            frozen_ok = frozen_ok && std::equal(w.values().begin(), w.values().end(),
                                                after.values().begin(), after.values().end());
          }
        }
        const bool ok = t.finite() && t.last10() < t.first10() && frozen_ok;
        o.pass = o.pass && ok;
        o.detail += label + " " + fmt("%.3f", t.first10()) + "->" + fmt("%.3f", t.last10()) +
                    (frozen_ok ? "" : " frozen weights changed") + (ok ? "" : " FAILED") + "; ";
      }
    }
  }
  o.detail = std::to_string(runs) + " runs: " + o.detail;
  return o;
}

// --- 10. round trips -----------------------------------------------------------------

Outcome round_trips(const fs::path& work) {
  const fs::path dir = work / "round_trips";
  fs::remove_all(dir);
  fs::create_directories(dir);

  Rng rng = make_rng(10, {});
  bool store_ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<std::size_t> n(0, 20), d(1, 16);
    Tensor m = testing::random_matrix(rng, n(rng), d(rng), 5.0);
    for (double& v : m.values()) v = static_cast<float>(v);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < m.rows(); ++i) ids.push_back("r" + std::to_string(i));
    write_store(m, ids, dir / "s.uemb");
    const EmbeddingStore s = read_store(dir / "s.uemb");
    const Tensor back = s.to_tensor();
    store_ok = store_ok && s.ids == ids && back.shape() == m.shape() &&
               std::equal(back.values().begin(), back.values().end(), m.values().begin(),
                          m.values().end());
    write_store(s, dir / "t.uemb");
    store_ok = store_ok && slurp(dir / "s.uemb") == slurp(dir / "t.uemb");
  }

  cli::SynthFlags flags;
  flags.facts = 12;
  flags.train = 40;
  flags.eval = 8;
  const auto s = capture([&](cli::Io io) { return cli::cmd_synth(flags, dir / "data", io); });
  if (s.code != 0) return {false, "synth failed: " + s.err};
  RunConfig cfg = load_run_config(dir / "data/train.conf");
  cfg.train.total_steps = 12;
  cfg.train.batch_size = 8;
  cfg.train.chunk_size = 4;
  auto conf_for = [&](const std::string& name) {
    RunConfig c = cfg;
    c.paths.checkpoint = dir / name / "model.ueck";
    c.paths.trace = dir / name / "trace.csv";
    const fs::path p = dir / (name + ".conf");
    std::ofstream(p) << dump_run_config(c);
    return p;
  };
  const fs::path whole = conf_for("whole"), split = conf_for("split");
  cli::TrainFlags first;
  first.stop_at = 5;
  cli::TrainFlags resume;
  resume.resume = true;
  const int c1 = capture([&](cli::Io io) { return cli::cmd_train(whole, {}, io); }).code;
  const int c2 = capture([&](cli::Io io) { return cli::cmd_train(split, first, io); }).code;
  const int c3 = capture([&](cli::Io io) { return cli::cmd_train(split, resume, io); }).code;
  const bool codes_ok = c1 == 0 && c2 == 0 && c3 == 0;
  const bool trace_ok = codes_ok && slurp(dir / "whole/trace.csv") == slurp(dir / "split/trace.csv");
  const bool ckpt_ok =
      codes_ok && slurp(dir / "whole/model.ueck") == slurp(dir / "split/model.ueck");
  return {store_ok && trace_ok && ckpt_ok,
          std::string("store round trips ") + (store_ok ? "bit-identical" : "DIFFER") +
              " over 100 matrices; resumed trace " + (trace_ok ? "byte-identical" : "DIFFERS") +
              ", final checkpoint " + (ckpt_ok ? "byte-identical" : "DIFFERS")};
}

}  // namespace
}  // namespace uemb::acceptance

int main(int argc, char** argv) {
  using namespace uemb::acceptance;
  CLI::App app{"Acceptance criteria"};
  std::string work_dir = (fs::temp_directory_path() / "uemb_acceptance").string();
  std::vector<int> only;
  app.add_option("--work-dir", work_dir, "Scratch directory");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);
  const fs::path work(work_dir);
  fs::create_directories(work);

  Experiment exp;
  const std::vector<Criterion> criteria{
      {1, "aggregation fixture", 1, aggregation_fixture},
      {2, "gradient correctness", 60, [&] { return gradient_check(work); }},
      {3, "GradCache exactness", 60, gradcache_exactness},
      {4, "LoRA identity and merge", 60, [&] { return lora_identity(work); }},
      {5, "loss sanity", 1, loss_sanity},
      {6, "schedule fixture", 1, schedule_fixture},
      {7, "metric oracles", 60, metric_oracles},
      {8, "desk-scale transfer", 600, [&] { return desk_scale(work, exp); }},
      {9, "ablation modes", 1800, [&] { return ablations(work, exp); }},
      {10, "round trips", 60, [&] { return round_trips(work); }},
  };

  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_seconds;
    const bool pass = o.pass && in_time;
    if (!pass) ++failed;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name
              << "): " << o.detail << " [" << fmt("%.2f", secs) << " s of "
              << fmt("%.0f", c.budget_seconds) << " s" << (in_time ? "" : ", OVER BUDGET")
              << "]" << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
