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
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uemb/autodiff.hpp"
#include "uemb/corpus.hpp"
#include "uemb/tensor.hpp"

namespace uemb {

enum class Pooling { last_token, weighted_mean };
std::string_view to_string(Pooling p);
Pooling parse_pooling(std::string_view s);

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t d_ff = 256;
  std::size_t vocab_size = 128;
  std::size_t max_len = 64;
  Pooling pooling = Pooling::last_token;
  double init_std = 0.02;

  void validate() const;
  std::size_t head_dim() const { return d_model / n_heads; }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class AdapterMode { full, lora, bitfit };
std::string_view to_string(AdapterMode m);
AdapterMode parse_adapter_mode(std::string_view s);

struct AdapterConfig {
  AdapterMode mode = AdapterMode::full;
  std::size_t rank = 64;
  double alpha = 64.0;

  void validate(const ModelConfig& model) const;
  double lora_scale() const { return alpha / static_cast<double>(rank); }
  friend bool operator==(const AdapterConfig&, const AdapterConfig&) = default;
};

inline constexpr double kLayerNormEps = 1e-5;

// Named weights of the toy decoder. Token embeddings are split in two:
// "embed.tokens" (every vocabulary row) and "embed.special" (one row per
// typed boundary token, always trainable). The rows of embed.tokens at the
// boundary ids are never read.
struct Parameters {
  ModelConfig config;
  AdapterConfig adapter;
  bool lora_attached = false;
  bool lora_merged = false;
  std::map<std::string, Tensor> weights;

  const Tensor& at(const std::string& name) const;
  std::size_t count(const std::vector<std::string>& names) const;
};

Parameters init_parameters(const ModelConfig& config, std::uint64_t seed);

// Base matrices that receive LoRA factors: q/k/v/o and both MLP projections
// of every layer, named "<target>.weight".
std::vector<std::string> lora_targets(const ModelConfig& config);

// Adds "<target>.lora_a" [r×in] ~ N(0, 0.02²) and "<target>.lora_b"
// [out×r] = 0 for every target; the effective weight becomes
// W + (alpha/r)·B·A.
Parameters attach_lora(Parameters p, const AdapterConfig& cfg, Rng& rng);

// Folds the factors into the base weights and removes them.
Parameters merge_lora(Parameters p);

// full: every weight. lora: the factors. bitfit: every ".bias" vector.
// "embed.special" is included in every mode.
std::vector<std::string> trainable_set(const Parameters& p,
                                       const AdapterConfig& cfg);

// Weights bound to one tape. Trainable weights become tape leaves (when the
// tape records); everything else is a constant. LoRA effective weights are
// assembled once per binding.
class BoundModel {
 public:
  BoundModel(const Parameters& p, ad::Tape& tape,
             const std::set<std::string>& trainable);
  // Uses the given Vars in place of the named weights; every other weight
  // is a constant.
  BoundModel(const Parameters& p, const std::map<std::string, ad::Var>& bound);

  // Hidden states [L×d_model] after the final norm.
  ad::Var forward(std::span<const int> ids) const;
  // forward + the configured pooling, [1×d_model].
  ad::Var embed(std::span<const int> ids) const;

  // Leaves for the trainable weights (empty on a non-recording tape).
  const std::map<std::string, ad::Var>& leaves() const { return leaves_; }
  const ModelConfig& config() const { return config_; }

 private:
  const ad::Var& w(const std::string& name) const;
  void assemble_lora(const Parameters& p);

  ModelConfig config_;
  std::map<std::string, ad::Var> vars_;
  std::map<std::string, ad::Var> leaves_;
};

ad::Var pool_last(const ad::Var& hidden, std::span<const int> ids);
ad::Var pool_weighted_mean(const ad::Var& hidden);
ad::Var pool(const ad::Var& hidden, std::span<const int> ids, Pooling mode);

// Plain-value forward pass, [L×d_model].
Tensor forward(const Parameters& p, std::span<const int> ids);
// Embedding of a token sequence with the model's pooling, shape [d_model].
Tensor embed_ids(const Parameters& p, std::span<const int> ids);
// encode_text + forward + pooling; raw, unnormalized vector [d_model].
Tensor encode(const Parameters& p, const Vocabulary& vocab,
              std::string_view text, InputType type = InputType::query);
// Row-per-text matrix [n×d_model].
Tensor encode_all(const Parameters& p, const Vocabulary& vocab,
                  std::span<const std::string> texts, InputType type);

}  // namespace uemb
