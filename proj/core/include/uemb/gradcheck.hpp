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
#include <string>
#include <vector>

#include "uemb/corpus.hpp"
#include "uemb/model.hpp"
#include "uemb/runconfig.hpp"

namespace uemb {

struct GradcheckTrial {
  std::uint64_t seed = 0;
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::string worst_weight;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Random token instances: anchors are queries, positives and negatives are
// documents, content lengths uniform in [1, seq_len].
std::vector<TrainInstance> random_instances(Rng& rng, std::size_t count,
                                            std::size_t n_negatives,
                                            std::size_t seq_len,
                                            std::size_t vocab_size);

// Central-difference check of the batch InfoNCE loss through embedding,
// transformer, pooling and loss, w.r.t. every trainable weight of a fresh
// model. LoRA B factors are perturbed off zero first so A receives gradient.
// The configured fault, if any, is active during the check.
GradcheckTrial pipeline_gradcheck(const RunConfig& cfg, std::size_t trial);

}  // namespace uemb
