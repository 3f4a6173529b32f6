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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "uemb/autodiff.hpp"
#include "uemb/corpus.hpp"
#include "uemb/model.hpp"
#include "uemb/tensor.hpp"

namespace uemb {

inline constexpr double kDefaultTemperature = 0.05;

struct SimilarityConfig {
  double temperature = kDefaultTemperature;
  void validate() const;
};

// cos(x, y). A zero vector is a ContractError.
double cosine(std::span<const double> x, std::span<const double> y);
// cos(x, y) / tau.
double score(std::span<const double> x, std::span<const double> y, double tau);

// -log( exp(s+) / (exp(s+) + Σ exp(s-_i)) ), s = score(anchor, ·, tau),
// evaluated as a log-sum-exp with max shift.
double infonce(std::span<const double> anchor, std::span<const double> positive,
               std::span<const std::span<const double>> negatives, double tau);

// Differentiable form over [1×d] embeddings.
ad::Var infonce(const ad::Var& anchor, const ad::Var& positive,
                std::span<const ad::Var> negatives, double tau);

struct InstanceEmbeddings {
  Tensor anchor;
  Tensor positive;
  std::vector<Tensor> negatives;
};

struct LossBatch {
  std::vector<InstanceEmbeddings> instances;
};

// Arithmetic mean of per-instance InfoNCE. Empty batches and mixed N are
// ContractErrors.
double batch_loss(const LossBatch& batch, double tau);

struct InstanceVars {
  ad::Var anchor;
  ad::Var positive;
  std::vector<ad::Var> negatives;
};
ad::Var batch_loss(std::span<const InstanceVars> batch, double tau);

struct GradientResult {
  double loss = 0.0;
  // Gradient per trainable weight name.
  std::map<std::string, Tensor> grads;
  // Largest number of nodes held by any single tape during the computation.
  std::size_t peak_tape_nodes = 0;
};

// Reference path: one tape over the whole batch.
GradientResult single_pass_gradients(const Parameters& p,
                                     std::span<const TrainInstance> batch,
                                     const std::vector<std::string>& trainable,
                                     double tau);

// Two-pass gradient caching. Pass 1 embeds every sequence without a tape and
// differentiates the loss w.r.t. the embeddings only; pass 2 re-embeds one
// chunk of chunk_size instances at a time on a fresh tape and backpropagates
// the cached embedding gradients into the weights, summing chunk by chunk.
GradientResult grad_cache_gradients(const Parameters& p,
                                    std::span<const TrainInstance> batch,
                                    std::size_t chunk_size,
                                    const std::vector<std::string>& trainable,
                                    double tau);

}  // namespace uemb
