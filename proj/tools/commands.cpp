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

#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "uemb/errors.hpp"
#include "uemb/evalkit.hpp"
#include "uemb/gradcheck.hpp"
#include "uemb/runconfig.hpp"
#include "uemb/store.hpp"
#include "uemb/trainer.hpp"

namespace uemb::cli {

namespace {

int guarded(Io io, const std::function<int()>& body) {
  try {
    return body();
  } catch (const NumericalAbort& e) {
    io.err << "error: numerical abort: " << e.what() << '\n';
    return kExitNumericalAbort;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void ensure_parent(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

void require_path(const std::filesystem::path& p, const char* key) {
  if (p.empty()) throw ConfigError(std::string(key) + " is not set");
}

Dataset load_dataset(const RunConfig& cfg) {
  require_path(cfg.paths.train_data, "paths.train_data");
  if (!std::filesystem::exists(cfg.paths.train_data)) {
    throw DataError("training data not found: " + cfg.paths.train_data.string());
  }
  for (const auto& p : cfg.paths.vocab_sources) {
    if (!std::filesystem::exists(p)) throw DataError("vocabulary source not found: " + p.string());
  }
  Dataset data;
  data.records = load_pairs(cfg.paths.train_data, cfg.data_format);
  if (data.records.empty()) {
    throw DataError("training data is empty: " + cfg.paths.train_data.string());
  }
  if (cfg.data_format == PairFormat::sym) attach_shared_pool(data.records);
  std::vector<std::string> texts = record_texts(data.records);
  for (const auto& p : cfg.paths.vocab_sources) {
    auto more = jsonl_strings(p);
    texts.insert(texts.end(), more.begin(), more.end());
  }
  data.vocab = build_vocab(texts, cfg.model.vocab_size);
  return data;
}

// Trace rows already on disk for steps 1..keep, without the header.
std::vector<std::string> kept_trace_rows(const std::filesystem::path& path, std::size_t keep) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot resume: trace not found: " + path.string());
  std::string line;
  std::getline(in, line);
  if (line + "\n" != kTraceHeader) throw DataError(path.string() + ": bad trace header");
  std::vector<std::string> rows;
  while (rows.size() < keep && std::getline(in, line)) rows.push_back(line + "\n");
  if (rows.size() < keep) {
    throw DataError("cannot resume: " + path.string() + " has fewer than " +
                    std::to_string(keep) + " rows");
  }
  return rows;
}

}  // namespace

int cmd_train(const std::filesystem::path& config, const TrainFlags& flags, Io io) {
  return guarded(io, [&] {
    const RunConfig cfg = load_run_config(config);
    require_path(cfg.paths.checkpoint, "paths.checkpoint");
    require_path(cfg.paths.trace, "paths.trace");
    const Dataset data = load_dataset(cfg);
    if (data.vocab.size() > cfg.model.vocab_size) {
      throw ConfigError("vocabulary needs " + std::to_string(data.vocab.size()) + " ids");
    }
    if (flags.dry_run) {
      io.out << "config ok: " << data.records.size() << " training records, vocabulary "
             << data.vocab.size() << ", " << cfg.train.total_steps << " steps\n";
      return kExitOk;
    }

    Checkpoint start;
    std::vector<std::string> trace_rows;
    if (flags.resume && std::filesystem::exists(cfg.paths.checkpoint)) {
      start = load_checkpoint(cfg.paths.checkpoint);
      if (!(start.train == cfg.train) || !(start.params.config == cfg.model) ||
          !(start.params.adapter == cfg.adapter)) {
        throw ConfigError("checkpoint " + cfg.paths.checkpoint.string() +
                          " was written under a different configuration");
      }
      if (!(start.vocab == data.vocab)) {
        throw DataError("checkpoint vocabulary does not match the training data");
      }
      trace_rows = kept_trace_rows(cfg.paths.trace, start.step);
    } else {
      start = initial_checkpoint(cfg.model, cfg.adapter, cfg.train, data.vocab);
    }

    ensure_parent(cfg.paths.trace);
    ensure_parent(cfg.paths.checkpoint);
    std::ofstream trace(cfg.paths.trace, std::ios::binary | std::ios::trunc);
    if (!trace) throw DataError("cannot write " + cfg.paths.trace.string());
    trace << kTraceHeader;
    for (const auto& row : trace_rows) trace << row;
    trace.flush();

    TrainOptions options;
    options.stop_at = flags.stop_at;
    options.on_step = [&](const TraceRow& row) {
      trace << format_trace_row(row);
      trace.flush();
    };
    const TrainResult result = train(data, std::move(start), options);
    save_checkpoint(result.checkpoint, cfg.paths.checkpoint);
    io.out << "trained to step " << result.checkpoint.step << " of " << cfg.train.total_steps;
    if (!result.trace.empty()) io.out << ", last loss " << fmt("%.6f", result.trace.back().loss);
    io.out << "\ncheckpoint: " << cfg.paths.checkpoint.string() << '\n';
    return kExitOk;
  });
}

int cmd_encode(const std::filesystem::path& checkpoint, const std::filesystem::path& input,
               InputType type, const std::filesystem::path& out, Io io) {
  return guarded(io, [&] {
    const Checkpoint ck = load_checkpoint(checkpoint);
    const auto items = load_encode_inputs(input);
    std::vector<std::string> texts, ids;
    for (const auto& it : items) {
      texts.push_back(it.text);
      ids.push_back(it.id);
    }
    const Tensor emb = encode_all(ck.params, ck.vocab, texts, type);
    ensure_parent(out);
    write_store(emb, ids, out);
    io.out << "encoded " << items.size() << " " << to_string(type) << " texts -> "
           << out.string() << '\n';
    return kExitOk;
  });
}

int cmd_eval(const std::filesystem::path& config, bool from_stores, Io io) {
  return guarded(io, [&] {
    const RunConfig cfg = load_run_config(config);
    require_path(cfg.bench.manifest, "bench.manifest");
    require_path(cfg.paths.report_dir, "paths.report_dir");
    const eval::Manifest manifest = eval::load_manifest(cfg.bench.manifest);
    if (manifest.tasks.empty()) {
      throw DataError("no tasks in manifest " + cfg.bench.manifest.string());
    }

    bool needs_model = false;
    for (const auto& t : manifest.tasks) needs_model |= !t.score.has_value();
    needs_model = needs_model && !from_stores;
    const bool wants_projection = !cfg.bench.projection.empty() && !from_stores;

    std::optional<Checkpoint> ck;
    std::optional<eval::ModelEncoder> encoder;
    if (needs_model || wants_projection) {
      require_path(cfg.paths.checkpoint, "paths.checkpoint");
      ck = load_checkpoint(cfg.paths.checkpoint);
      encoder.emplace(ck->params, ck->vocab);
    }

    std::vector<eval::RawScore> raw;
    for (const eval::TaskSpec& t : manifest.tasks) {
      const double score = eval::run_task(t, needs_model ? &*encoder : nullptr);
      raw.push_back({t.name, t.language, t.kind, t.symmetry, t.in_domain, t.metric, score});
      io.out << t.name << " (" << t.language << ", " << to_string(t.metric)
             << "): " << fmt("%.2f", score) << '\n';
    }
    eval::BenchmarkReport report = eval::aggregate(raw);
    report.provenance["manifest"] = cfg.bench.manifest.filename().string();
    report.provenance["embeddings"] =
        needs_model ? "checkpoint " + cfg.paths.checkpoint.filename().string()
                    : (from_stores ? "stores" : "precomputed scores");
    report.provenance["seed"] = std::to_string(cfg.seed);
    eval::write_report(report, cfg.paths.report_dir);
    for (const auto& l : report.languages) {
      io.out << l.language << ": asym " << fmt("%.2f", l.asym) << ", sym "
             << fmt("%.2f", l.sym) << ", all " << fmt("%.2f", l.all) << '\n';
    }

    if (wants_projection) {
      const auto pairs = load_parallel(cfg.bench.projection);
      std::vector<std::string> texts;
      for (const auto& p : pairs) texts.push_back(p.text_a);
      for (const auto& p : pairs) texts.push_back(p.text_b);
      const Tensor xy = eval::project_2d(encoder->encode(texts, InputType::query));
      std::vector<eval::ProjectedPoint> points;
      for (std::size_t i = 0; i < texts.size(); ++i) {
        const auto& p = pairs[i % pairs.size()];
        points.push_back({p.id, i < pairs.size() ? "A" : "B", xy.at(i, 0), xy.at(i, 1)});
      }
      std::ofstream out(cfg.paths.report_dir / "projection.csv", std::ios::binary);
      out << eval::projection_csv(points);
    }
    io.out << "report: " << cfg.paths.report_dir.string() << '\n';
    return kExitOk;
  });
}

int cmd_report(const std::filesystem::path& in, const std::filesystem::path& out_dir, Io io) {
  return guarded(io, [&] {
    std::ifstream f(in, std::ios::binary);
    if (!f) throw DataError("cannot open " + in.string());
    std::ostringstream buf;
    buf << f.rdbuf();
    const auto raw = eval::parse_scores_csv(buf.str(), in.string());
    if (raw.empty()) throw DataError("no tasks in " + in.string());
    eval::BenchmarkReport report = eval::aggregate(raw);
    report.provenance["scores"] = in.filename().string();
    eval::write_report(report, out_dir);
    io.out << eval::radar_csv(report);
    return kExitOk;
  });
}

int cmd_gradcheck(const std::filesystem::path& config, Io io) {
  return guarded(io, [&] {
    const RunConfig cfg = load_run_config(config);
    double worst = 0.0;
    for (std::size_t t = 0; t < cfg.gradcheck.trials; ++t) {
      const GradcheckTrial r = pipeline_gradcheck(cfg, t);
      io.out << "trial " << t << ": max rel error " << fmt("%.3e", r.max_rel_error) << " over "
             << r.coords_checked << " coords (worst " << r.worst_weight << ")\n";
      worst = std::max(worst, r.max_rel_error);
      if (!std::isfinite(r.max_rel_error)) worst = r.max_rel_error;
    }
    const bool ok = worst < 1e-4;
    io.out << "max relative error: " << fmt("%.6e", worst) << (ok ? " (ok)" : " (FAILED)") << '\n';
    return ok ? kExitOk : kExitVerificationFailed;
  });
}

int cmd_synth(const SynthFlags& flags, const std::filesystem::path& out, Io io) {
  return guarded(io, [&] {
    const SyntheticCorpus c =
        generate_synthetic_bilingual(flags.seed, flags.facts, flags.train, flags.eval);
    write_synthetic(c, out);

    std::ostringstream m;
    for (const char* lang : {"A", "B"}) {
      const std::string l(lang);
      const std::string p = "task." + std::string(l == "A" ? "a" : "b") + "_";
      auto task = [&](const std::string& name, const char* kind, bool in_domain) {
        m << p << name << ".kind = " << kind << '\n'
          << p << name << ".language = " << l << '\n'
          << p << name << ".in_domain = " << (in_domain ? "true" : "false") << '\n';
      };
      task("retrieval", "retrieval", true);
      m << p << "retrieval.path.queries = " << l << "/retrieval/queries.jsonl\n"
        << p << "retrieval.path.corpus = " << l << "/retrieval/corpus.jsonl\n"
        << p << "retrieval.path.qrels = " << l << "/retrieval/qrels.tsv\n";
      task("retrieval_ood", "retrieval", false);
      m << p << "retrieval_ood.path.queries = " << l << "/retrieval_ood/queries.jsonl\n"
        << p << "retrieval_ood.path.corpus = " << l << "/retrieval_ood/corpus.jsonl\n"
        << p << "retrieval_ood.path.qrels = " << l << "/retrieval_ood/qrels.tsv\n";
      task("sts", "sts", true);
      m << p << "sts.path.data = " << l << "/sts.jsonl\n";
      task("sts_ood", "sts", false);
      m << p << "sts_ood.path.data = " << l << "/sts_ood.jsonl\n";
      task("cls", "classification", true);
      m << p << "cls.path.train = " << l << "/cls_train.jsonl\n"
        << p << "cls.path.test = " << l << "/cls_test.jsonl\n";
      m << '\n';
    }
    m << "task.bitext.kind = bitext\n"
      << "task.bitext.language = A-B\n"
      << "task.bitext.path.sents_a = bitext/sentsA.jsonl\n"
      << "task.bitext.path.sents_b = bitext/sentsB.jsonl\n"
      << "task.bitext.path.gold = bitext/gold.tsv\n";
    std::ofstream(out / "manifest.conf", std::ios::binary) << m.str();

    RunConfig cfg;
    cfg.seed = flags.seed;
    cfg.train.seed = flags.seed;
    cfg.model.max_len = 32;
    cfg.train.peak_lr = 2e-3;
    cfg.train.batch_size = 16;
    cfg.train.chunk_size = 8;
    cfg.train.total_steps = 300;
    cfg.paths.train_data = "train_a.jsonl";
    cfg.paths.vocab_sources = {"parallel.jsonl"};
    cfg.paths.checkpoint = "run/model.ueck";
    cfg.paths.trace = "run/trace.csv";
    cfg.paths.report_dir = "run/report";
    cfg.bench.manifest = "manifest.conf";
    cfg.bench.projection = "parallel.jsonl";
    std::ofstream(out / "train.conf", std::ios::binary) << dump_run_config(cfg);

    io.out << "wrote synthetic corpus (" << flags.facts << " facts, " << c.train_a.size()
           << " training pairs) to " << out.string() << '\n';
    return kExitOk;
  });
}

int cmd_config(const std::filesystem::path& config, Io io) {
  return guarded(io, [&] {
    const RunConfig cfg = config.empty() ? RunConfig{} : load_run_config(config);
    io.out << dump_run_config(cfg);
    return kExitOk;
  });
}

int run(int argc, const char* const* argv, Io io) {
  CLI::App app{"uemb: contrastive text-embedding training and evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  TrainFlags train_flags;
  std::size_t stop_at = 0;
  auto* train = app.add_subcommand("train", "Train from a run configuration");
  train->add_option("--config", config_path, "Run configuration file")->required();
  train->add_flag("--dry-run", train_flags.dry_run, "Validate configuration and data only");
  train->add_flag("--resume", train_flags.resume, "Continue from paths.checkpoint if present");
  auto* stop_opt = train->add_option("--stop-at", stop_at, "Stop after this many steps");

  std::string ckpt, input, type = "query", out;
  auto* encode = app.add_subcommand("encode", "Encode JSON Lines texts into an embedding store");
  encode->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  encode->add_option("--input", input, "JSON Lines input with a text field")->required();
  encode->add_option("--type", type, "Input type")->check(CLI::IsMember({"query", "document"}));
  encode->add_option("--out", out, "Output store path")->required();

  bool from_stores = false;
  auto* evalc = app.add_subcommand("eval", "Run the benchmark manifest and write reports");
  evalc->add_option("--config", config_path, "Run configuration file")->required();
  evalc->add_flag("--from-stores", from_stores, "Use the manifest's embedding stores");

  std::string report_in, report_out;
  auto* report = app.add_subcommand("report", "Aggregate a raw-score CSV into reports");
  report->add_option("--in", report_in, "Raw-score CSV")->required();
  report->add_option("--out", report_out, "Output directory")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the full pipeline");
  gradcheck->add_option("--config", config_path, "Run configuration file")->required();

  SynthFlags synth_flags;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write the synthetic bilingual corpus");
  synth->add_option("--seed", synth_flags.seed, "Generator seed");
  synth->add_option("--facts", synth_flags.facts, "Number of latent facts");
  synth->add_option("--train", synth_flags.train, "Training pairs");
  synth->add_option("--eval", synth_flags.eval, "Evaluation items per task");
  synth->add_option("--out", synth_out, "Output directory")->required();

  auto* config = app.add_subcommand("config", "Print every configuration key and value");
  config->add_option("--config", config_path, "Run configuration file (defaults if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, io.out, io.err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*train) {
    if (*stop_opt) train_flags.stop_at = stop_at;
    return cmd_train(config_path, train_flags, io);
  }
  if (*encode) {
    return cmd_encode(ckpt, input, parse_input_type(type), out, io);
  }
  if (*evalc) return cmd_eval(config_path, from_stores, io);
  if (*report) return cmd_report(report_in, report_out, io);
  if (*gradcheck) return cmd_gradcheck(config_path, io);
  if (*synth) return cmd_synth(synth_flags, synth_out, io);
  if (*config) return cmd_config(config_path, io);
  return kExitUsage;
}

}  // namespace uemb::cli
