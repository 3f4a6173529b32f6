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

#include "uemb/model.hpp"

#include <algorithm>
#include <cmath>

#include "uemb/errors.hpp"
#include "uemb/kernels.hpp"

namespace uemb {

std::string_view to_string(Pooling p) {
  return p == Pooling::last_token ? "last_token" : "weighted_mean";
}

Pooling parse_pooling(std::string_view s) {
  if (s == "last_token") return Pooling::last_token;
  if (s == "weighted_mean") return Pooling::weighted_mean;
  throw ConfigError("unknown pooling '" + std::string(s) +
                    "' (expected last_token|weighted_mean)");
}

std::string_view to_string(AdapterMode m) {
  switch (m) {
    case AdapterMode::full: return "full";
    case AdapterMode::lora: return "lora";
    case AdapterMode::bitfit: return "bitfit";
  }
  return "full";
}

AdapterMode parse_adapter_mode(std::string_view s) {
  if (s == "full") return AdapterMode::full;
  if (s == "lora") return AdapterMode::lora;
  if (s == "bitfit") return AdapterMode::bitfit;
  throw ConfigError("unknown adapter mode '" + std::string(s) +
                    "' (expected full|lora|bitfit)");
}

void ModelConfig::validate() const {
  if (d_model == 0 || n_layers == 0 || n_heads == 0 || d_ff == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) +
                      " is not divisible by n_heads " + std::to_string(n_heads));
  }
  if (max_len < 4) throw ConfigError("max_len must be >= 4");
  if (vocab_size <= static_cast<std::size_t>(token_ids::reserved_count)) {
    throw ConfigError("vocab_size must exceed the reserved ids");
  }
  if (!(init_std > 0.0)) throw ConfigError("init_std must be positive");
}

void AdapterConfig::validate(const ModelConfig& model) const {
  if (mode != AdapterMode::lora) return;
  if (rank < 1 || rank > model.d_model) {
    throw ConfigError("lora rank " + std::to_string(rank) +
                      " outside [1, d_model=" + std::to_string(model.d_model) +
                      "]");
  }
  if (!(alpha > 0.0)) throw ConfigError("lora alpha must be positive");
}

const Tensor& Parameters::at(const std::string& name) const {
  auto it = weights.find(name);
  if (it == weights.end()) throw ContractError("no weight named " + name);
  return it->second;
}

std::size_t Parameters::count(const std::vector<std::string>& names) const {
  std::size_t total = 0;
  for (const auto& n : names) total += at(n).size();
  return total;
}

namespace {

std::string layer_prefix(std::size_t i) {
  return "layers." + std::to_string(i) + ".";
}

std::string strip_suffix(const std::string& s, std::string_view suffix) {
  return s.substr(0, s.size() - suffix.size());
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.substr(s.size() - suffix.size()) == suffix;
}

Tensor gaussian(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = stddev * standard_normal(rng);
  return t;
}

// Effective LoRA delta (alpha/r)·B·A, computed with the same kernel the
// tape uses so merged and unmerged weights agree bit for bit.
Tensor lora_delta(const Tensor& a, const Tensor& b, double scale_factor) {
  const std::size_t out = b.rows(), r = b.cols(), in = a.cols();
  Tensor d({out, in});
  kernels::gemm_nn(b.values(), a.values(), d.values(), out, r, in);
  for (double& v : d.values()) v *= scale_factor;
  return d;
}

}  // namespace

Parameters init_parameters(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Parameters p;
  p.config = config;
  p.adapter = AdapterConfig{};
  Rng rng = make_rng(seed, {0x6d6f64656cULL});
  const std::size_t d = config.d_model;
  const double s = config.init_std;
  auto& w = p.weights;
  // Insertion order is fixed so the random stream is reproducible.
  w["embed.tokens"] = gaussian({config.vocab_size, d}, s, rng);
  w["embed.special"] =
      gaussian({static_cast<std::size_t>(token_ids::special_count), d}, s, rng);
  w["embed.positions"] = gaussian({config.max_len, d}, s, rng);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    const std::string pre = layer_prefix(l);
    Tensor ones({d});
    ones.fill(1.0);
    w[pre + "norm1.gain"] = ones;
    w[pre + "norm1.bias"] = Tensor({d});
    for (const char* proj : {"q", "k", "v", "o"}) {
      w[pre + "attn." + proj + ".weight"] = gaussian({d, d}, s, rng);
      w[pre + "attn." + proj + ".bias"] = Tensor({d});
    }
    w[pre + "norm2.gain"] = ones;
    w[pre + "norm2.bias"] = Tensor({d});
    w[pre + "mlp.up.weight"] = gaussian({config.d_ff, d}, s, rng);
    w[pre + "mlp.up.bias"] = Tensor({config.d_ff});
    w[pre + "mlp.down.weight"] = gaussian({d, config.d_ff}, s, rng);
    w[pre + "mlp.down.bias"] = Tensor({d});
  }
  Tensor ones({d});
  ones.fill(1.0);
  w["final_norm.gain"] = ones;
  w["final_norm.bias"] = Tensor({d});
  return p;
}

std::vector<std::string> lora_targets(const ModelConfig& config) {
  std::vector<std::string> out;
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    const std::string pre = layer_prefix(l);
    for (const char* proj : {"q", "k", "v", "o"}) {
      out.push_back(pre + "attn." + proj + ".weight");
    }
    out.push_back(pre + "mlp.up.weight");
    out.push_back(pre + "mlp.down.weight");
  }
  return out;
}

Parameters attach_lora(Parameters p, const AdapterConfig& cfg, Rng& rng) {
  if (cfg.mode != AdapterMode::lora) {
    throw ContractError("attach_lora requires adapter mode lora");
  }
  if (p.lora_attached) throw ContractError("LoRA factors already attached");
  cfg.validate(p.config);
  for (const std::string& target : lora_targets(p.config)) {
    const Tensor& base = p.at(target);
    const std::size_t out = base.rows(), in = base.cols();
    if (cfg.rank > std::min(in, out)) {
      throw ConfigError("lora rank " + std::to_string(cfg.rank) +
                        " exceeds min(in, out) of " + target);
    }
    const std::string stem = strip_suffix(target, ".weight");
    p.weights[stem + ".lora_a"] = gaussian({cfg.rank, in}, 0.02, rng);
    p.weights[stem + ".lora_b"] = Tensor({out, cfg.rank});
  }
  p.adapter = cfg;
  p.lora_attached = true;
  return p;
}

Parameters merge_lora(Parameters p) {
  if (p.lora_merged) throw ContractError("merge_lora called twice");
  if (!p.lora_attached) throw ContractError("merge_lora: no LoRA factors attached");
  const double s = p.adapter.lora_scale();
  for (const std::string& target : lora_targets(p.config)) {
    const std::string stem = strip_suffix(target, ".weight");
    const Tensor delta =
        lora_delta(p.at(stem + ".lora_a"), p.at(stem + ".lora_b"), s);
    Tensor merged = p.at(target);
    for (std::size_t i = 0; i < merged.size(); ++i) merged[i] = merged[i] + delta[i];
    p.weights[target] = std::move(merged);
    p.weights.erase(stem + ".lora_a");
    p.weights.erase(stem + ".lora_b");
  }
  p.lora_attached = false;
  p.lora_merged = true;
  return p;
}

std::vector<std::string> trainable_set(const Parameters& p,
                                       const AdapterConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& [name, _] : p.weights) {
    bool keep = name == "embed.special";
    switch (cfg.mode) {
      case AdapterMode::full:
        keep = true;
        break;
      case AdapterMode::lora:
        keep = keep || ends_with(name, ".lora_a") || ends_with(name, ".lora_b");
        break;
      case AdapterMode::bitfit:
        keep = keep || ends_with(name, ".bias");
        break;
    }
    if (keep) out.push_back(name);
  }
  return out;
}

// --- bound model -------------------------------------------------------------------

BoundModel::BoundModel(const Parameters& p, ad::Tape& tape,
                       const std::set<std::string>& trainable)
    : config_(p.config) {
  for (const auto& [name, value] : p.weights) {
    if (trainable.count(name) && tape.recording()) {
      ad::Var v = tape.leaf(value);
      leaves_.emplace(name, v);
      vars_.emplace(name, v);
    } else {
      vars_.emplace(name, ad::Var(value));
    }
  }
  assemble_lora(p);
}

BoundModel::BoundModel(const Parameters& p,
                       const std::map<std::string, ad::Var>& bound)
    : config_(p.config) {
  for (const auto& [name, value] : p.weights) {
    auto it = bound.find(name);
    if (it != bound.end()) {
      if (it->second.shape() != value.shape()) {
        throw DimensionError("bound weight " + name + " has shape " +
                             shape_string(it->second.shape()) + ", expected " +
                             shape_string(value.shape()));
      }
      vars_.emplace(name, it->second);
      if (it->second.tracked()) leaves_.emplace(name, it->second);
    } else {
      vars_.emplace(name, ad::Var(value));
    }
  }
  assemble_lora(p);
}

void BoundModel::assemble_lora(const Parameters& p) {
  if (p.lora_attached) {
    const double s = p.adapter.lora_scale();
    for (const std::string& target : lora_targets(config_)) {
      const std::string stem = strip_suffix(target, ".weight");
      ad::Var delta =
          ad::scale(ad::matmul(w(stem + ".lora_b"), w(stem + ".lora_a")), s);
      vars_[target] = ad::add(w(target), delta);
    }
  }
}

const ad::Var& BoundModel::w(const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ContractError("no weight named " + name);
  return it->second;
}

ad::Var BoundModel::forward(std::span<const int> ids) const {
  const std::size_t L = ids.size();
  if (L == 0) throw ContractError("forward: empty token sequence");
  if (L > config_.max_len) {
    throw ContractError("forward: sequence length " + std::to_string(L) +
                        " exceeds max_len " + std::to_string(config_.max_len));
  }
  std::vector<std::ptrdiff_t> tok(L), special(L);
  for (std::size_t i = 0; i < L; ++i) {
    const int id = ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw ContractError("forward: token id " + std::to_string(id) +
                          " outside vocabulary of size " +
                          std::to_string(config_.vocab_size));
    }
    const bool is_special = id >= token_ids::first_special &&
                            id < token_ids::first_special + token_ids::special_count;
    tok[i] = is_special ? -1 : id;
    special[i] = is_special ? id - token_ids::first_special : -1;
  }
  ad::Var x = ad::add(ad::gather_rows(w("embed.tokens"), tok),
                      ad::gather_rows(w("embed.special"), special));
  x = ad::add(x, ad::slice_rows(w("embed.positions"), 0, L));

  const std::size_t dh = config_.head_dim();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string pre = layer_prefix(l);
    auto linear = [&](const ad::Var& in, const std::string& name) {
      return ad::add_row(ad::matmul_nt(in, w(name + ".weight")), w(name + ".bias"));
    };
    ad::Var h = ad::layer_norm(x, w(pre + "norm1.gain"), w(pre + "norm1.bias"),
                               kLayerNormEps);
    ad::Var q = linear(h, pre + "attn.q");
    ad::Var k = linear(h, pre + "attn.k");
    ad::Var v = linear(h, pre + "attn.v");
    std::vector<ad::Var> heads;
    for (std::size_t hd = 0; hd < config_.n_heads; ++hd) {
      const std::size_t c0 = hd * dh, c1 = c0 + dh;
      ad::Var scores = ad::scale(
          ad::matmul_nt(ad::slice_cols(q, c0, c1), ad::slice_cols(k, c0, c1)),
          inv_sqrt_dh);
      heads.push_back(ad::matmul(ad::causal_softmax_rows(scores),
                                 ad::slice_cols(v, c0, c1)));
    }
    ad::Var attn = heads.size() == 1 ? heads[0] : ad::concat_cols(heads);
    x = ad::add(x, linear(attn, pre + "attn.o"));
    ad::Var h2 = ad::layer_norm(x, w(pre + "norm2.gain"), w(pre + "norm2.bias"),
                                kLayerNormEps);
    x = ad::add(x, linear(ad::gelu(linear(h2, pre + "mlp.up")), pre + "mlp.down"));
  }
  return ad::layer_norm(x, w("final_norm.gain"), w("final_norm.bias"),
                        kLayerNormEps);
}

ad::Var BoundModel::embed(std::span<const int> ids) const {
  return pool(forward(ids), ids, config_.pooling);
}

// --- pooling -----------------------------------------------------------------------

ad::Var pool_last(const ad::Var& hidden, std::span<const int> ids) {
  const std::size_t L = hidden.value().rows();
  if (ids.size() != L) {
    throw ContractError("pool_last: " + std::to_string(ids.size()) +
                        " ids for " + std::to_string(L) + " hidden rows");
  }
  if (L == 0 || !token_ids::is_eos(ids.back())) {
    throw ContractError("pool_last: last token is not an eos token");
  }
  return ad::slice_rows(hidden, L - 1, L);
}

ad::Var pool_weighted_mean(const ad::Var& hidden) {
  const std::size_t L = hidden.value().rows();
  if (L == 0) throw ContractError("pool_weighted_mean: empty sequence");
  const double denom = static_cast<double>(L) * static_cast<double>(L + 1) / 2.0;
  Tensor weights({1, L});
  for (std::size_t i = 0; i < L; ++i) {
    weights[i] = static_cast<double>(i + 1) / denom;
  }
  return ad::matmul(ad::Var(std::move(weights)), hidden);
}

ad::Var pool(const ad::Var& hidden, std::span<const int> ids, Pooling mode) {
  return mode == Pooling::last_token ? pool_last(hidden, ids)
                                     : pool_weighted_mean(hidden);
}

// --- value-level helpers -------------------------------------------------------

Tensor forward(const Parameters& p, std::span<const int> ids) {
  ad::Tape tape(false);
  BoundModel m(p, tape, {});
  return m.forward(ids).value();
}

Tensor embed_ids(const Parameters& p, std::span<const int> ids) {
  ad::Tape tape(false);
  BoundModel m(p, tape, {});
  Tensor e = m.embed(ids).value();
  return Tensor({p.config.d_model}, std::vector<double>(e.values().begin(),
                                                        e.values().end()));
}

Tensor encode(const Parameters& p, const Vocabulary& vocab,
              std::string_view text, InputType type) {
  return embed_ids(p, encode_text(vocab, text, type, p.config.max_len));
}

Tensor encode_all(const Parameters& p, const Vocabulary& vocab,
                  std::span<const std::string> texts, InputType type) {
  ad::Tape tape(false);
  BoundModel m(p, tape, {});
  const std::size_t d = p.config.d_model;
  Tensor out({texts.size(), d});
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const TokenIds ids = encode_text(vocab, texts[i], type, p.config.max_len);
    const Tensor e = m.embed(ids).value();
    std::copy(e.values().begin(), e.values().end(), out.row_span(i).begin());
  }
  return out;
}

}  // namespace uemb
