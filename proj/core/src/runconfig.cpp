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

#include "uemb/runconfig.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "uemb/errors.hpp"
#include "uemb/flatconf.hpp"

namespace uemb {

std::string_view to_string(ad::debug::Fault f) {
  switch (f) {
    case ad::debug::Fault::none: return "none";
    case ad::debug::Fault::gelu_backward: return "gelu_backward";
    case ad::debug::Fault::softmax_backward: return "softmax_backward";
  }
  return "?";
}

ad::debug::Fault parse_fault(std::string_view s) {
  for (auto f : {ad::debug::Fault::none, ad::debug::Fault::gelu_backward,
                 ad::debug::Fault::softmax_backward}) {
    if (to_string(f) == s) return f;
  }
  throw ConfigError("unknown fault '" + std::string(s) + "'");
}

void RunConfig::validate() const {
  model.validate();
  adapter.validate(model);
  train.validate();
  if (gradcheck.trials < 1) throw ConfigError("gradcheck.trials must be >= 1");
  if (gradcheck.batch < 1) throw ConfigError("gradcheck.batch must be >= 1");
  if (gradcheck.seq_len < 1 || gradcheck.seq_len + 2 > model.max_len) {
    throw ConfigError("gradcheck.seq_len must lie in [1, model.max_len - 2]");
  }
}

namespace {

std::vector<std::filesystem::path> split_paths(const std::string& v,
                                               const std::filesystem::path& base) {
  std::vector<std::filesystem::path> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    const auto last = item.find_last_not_of(" \t");
    if (first == std::string::npos) throw ConfigError("empty entry in path list '" + v + "'");
    out.push_back(base / item.substr(first, last - first + 1));
  }
  return out;
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir,
                           const std::string& source) {
  const FlatConfig flat = FlatConfig::parse(text, source);
  RunConfig c;
  bool alpha_set = false;
  using Setter = std::function<void(const FlatEntry&)>;
  auto count = [&](std::size_t& dst) { return [&](const FlatEntry& e) { dst = parse_count(flat, e); }; };
  auto real = [&](double& dst) { return [&](const FlatEntry& e) { dst = parse_real(flat, e); }; };
  auto path = [&](std::filesystem::path& dst) {
    return [&](const FlatEntry& e) { dst = base_dir / e.value; };
  };
  const std::map<std::string, Setter, std::less<>> setters = {
      {"model.d_model", count(c.model.d_model)},
      {"model.n_layers", count(c.model.n_layers)},
      {"model.n_heads", count(c.model.n_heads)},
      {"model.d_ff", count(c.model.d_ff)},
      {"model.vocab_size", count(c.model.vocab_size)},
      {"model.max_len", count(c.model.max_len)},
      {"model.pooling", [&](const FlatEntry& e) { c.model.pooling = parse_pooling(e.value); }},
      {"model.init_std", real(c.model.init_std)},
      {"adapter.mode", [&](const FlatEntry& e) { c.adapter.mode = parse_adapter_mode(e.value); }},
      {"adapter.rank", count(c.adapter.rank)},
      {"adapter.alpha",
       [&](const FlatEntry& e) {
         c.adapter.alpha = parse_real(flat, e);
         alpha_set = true;
       }},
      {"train.peak_lr", real(c.train.peak_lr)},
      {"train.warmup_frac", real(c.train.warmup_frac)},
      {"train.floor_frac", real(c.train.floor_frac)},
      {"train.batch_size", count(c.train.batch_size)},
      {"train.chunk_size", count(c.train.chunk_size)},
      {"train.total_steps", count(c.train.total_steps)},
      {"train.negatives", count(c.train.n_negatives)},
      {"train.temperature", real(c.train.temperature)},
      {"train.beta1", real(c.train.beta1)},
      {"train.beta2", real(c.train.beta2)},
      {"train.eps", real(c.train.eps)},
      {"train.weight_decay", real(c.train.weight_decay)},
      {"train.data_format", [&](const FlatEntry& e) { c.data_format = parse_pair_format(e.value); }},
      {"bench.manifest", path(c.bench.manifest)},
      {"bench.projection", path(c.bench.projection)},
      {"paths.train_data", path(c.paths.train_data)},
      {"paths.vocab_sources",
       [&](const FlatEntry& e) { c.paths.vocab_sources = split_paths(e.value, base_dir); }},
      {"paths.checkpoint", path(c.paths.checkpoint)},
      {"paths.trace", path(c.paths.trace)},
      {"paths.report_dir", path(c.paths.report_dir)},
      {"seed", [&](const FlatEntry& e) { c.seed = parse_u64(flat, e); }},
      {"gradcheck.trials", count(c.gradcheck.trials)},
      {"gradcheck.coords", count(c.gradcheck.coords)},
      {"gradcheck.batch", count(c.gradcheck.batch)},
      {"gradcheck.seq_len", count(c.gradcheck.seq_len)},
      {"gradcheck.fault", [&](const FlatEntry& e) { c.gradcheck.fault = parse_fault(e.value); }},
  };
  for (const FlatEntry& e : flat.entries()) {
    auto it = setters.find(e.key);
    if (it == setters.end()) {
      throw ConfigError(flat.where(e) + ": unknown key '" + e.key + "'");
    }
    try {
      it->second(e);
    } catch (const ConfigError& err) {
      const std::string msg = err.what();
      if (msg.rfind(flat.source(), 0) == 0) throw;
      throw ConfigError(flat.where(e) + ": " + msg);
    }
  }
  if (!alpha_set) c.adapter.alpha = static_cast<double>(c.adapter.rank);
  c.train.seed = c.seed;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.parent_path(), path.string());
}

namespace {

std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string dump_run_config(const RunConfig& c) {
  std::ostringstream o;
  auto line = [&](const std::string& key, const std::string& value) {
    o << key << " = " << value << '\n';
  };
  auto opt_path = [&](const std::string& key, const std::filesystem::path& p) {
    if (p.empty()) {
      o << "# " << key << " = <unset>\n";
    } else {
      line(key, p.string());
    }
  };
  line("seed", std::to_string(c.seed));
  o << '\n';
  line("model.d_model", std::to_string(c.model.d_model));
  line("model.n_layers", std::to_string(c.model.n_layers));
  line("model.n_heads", std::to_string(c.model.n_heads));
  line("model.d_ff", std::to_string(c.model.d_ff));
  line("model.vocab_size", std::to_string(c.model.vocab_size));
  line("model.max_len", std::to_string(c.model.max_len));
  line("model.pooling", std::string(to_string(c.model.pooling)));
  line("model.init_std", num(c.model.init_std));
  o << '\n';
  line("adapter.mode", std::string(to_string(c.adapter.mode)));
  line("adapter.rank", std::to_string(c.adapter.rank));
  line("adapter.alpha", num(c.adapter.alpha));
  o << '\n';
  line("train.peak_lr", num(c.train.peak_lr));
  line("train.warmup_frac", num(c.train.warmup_frac));
  line("train.floor_frac", num(c.train.floor_frac));
  line("train.batch_size", std::to_string(c.train.batch_size));
  line("train.chunk_size", std::to_string(c.train.chunk_size));
  line("train.total_steps", std::to_string(c.train.total_steps));
  line("train.negatives", std::to_string(c.train.n_negatives));
  line("train.temperature", num(c.train.temperature));
  line("train.beta1", num(c.train.beta1));
  line("train.beta2", num(c.train.beta2));
  line("train.eps", num(c.train.eps));
  line("train.weight_decay", num(c.train.weight_decay));
  line("train.data_format", std::string(to_string(c.data_format)));
  o << '\n';
  opt_path("bench.manifest", c.bench.manifest);
  opt_path("bench.projection", c.bench.projection);
  o << '\n';
  opt_path("paths.train_data", c.paths.train_data);
  if (c.paths.vocab_sources.empty()) {
    o << "# paths.vocab_sources = <unset>\n";
  } else {
    std::string joined;
    for (const auto& p : c.paths.vocab_sources) joined += (joined.empty() ? "" : ", ") + p.string();
    line("paths.vocab_sources", joined);
  }
  opt_path("paths.checkpoint", c.paths.checkpoint);
  opt_path("paths.trace", c.paths.trace);
  opt_path("paths.report_dir", c.paths.report_dir);
  o << '\n';
  line("gradcheck.trials", std::to_string(c.gradcheck.trials));
  line("gradcheck.coords", std::to_string(c.gradcheck.coords));
  line("gradcheck.batch", std::to_string(c.gradcheck.batch));
  line("gradcheck.seq_len", std::to_string(c.gradcheck.seq_len));
  line("gradcheck.fault", std::string(to_string(c.gradcheck.fault)));
  return o.str();
}

}  // namespace uemb
