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
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uemb/corpus.hpp"
#include "uemb/model.hpp"
#include "uemb/tensor.hpp"

namespace uemb {

struct TrainConfig {
  double peak_lr = 5e-5;
  double warmup_frac = 0.10;
  double floor_frac = 0.10;
  std::size_t batch_size = 1024;
  std::size_t chunk_size = 64;
  std::size_t total_steps = 0;
  std::size_t n_negatives = 7;
  double temperature = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t warmup_steps() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Linear warmup from 0 to peak over W = round(warmup_frac·total) steps, then
// peak·(floor + (1-floor)·½(1+cos(π·progress))), progress = (step-W)/(total-W).
double lr_at(std::size_t step, const TrainConfig& cfg);

struct AdamWState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::uint64_t t = 0;  // completed updates
};

// True for weights exempt from decoupled weight decay (biases, norm gains).
bool skips_weight_decay(const std::string& name);

// One AdamW update of every weight named in grads. Moments are created on
// first use. Decay is applied as w ← w·(1 - lr·λ) before the Adam step.
void adamw_step(std::map<std::string, Tensor>& weights,
                const std::map<std::string, Tensor>& grads, AdamWState& state,
                double lr, const TrainConfig& cfg);

struct Checkpoint {
  Parameters params;
  TrainConfig train;
  Vocabulary vocab;
  AdamWState optimizer;
  std::uint64_t step = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Canonical text of every setting that shapes a run; hashed into the
// checkpoint header.
std::string checkpoint_metadata(const Checkpoint& c);

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::vector<unsigned char> serialize_checkpoint(const Checkpoint& c);
Checkpoint deserialize_checkpoint(std::span<const unsigned char> bytes);

struct TraceRow {
  std::uint64_t step = 0;  // 1-based
  double lr = 0.0;
  double loss = 0.0;
};

// One "step,lr,loss" line (no header, LF-terminated).
std::string format_trace_row(const TraceRow& row);
inline constexpr const char* kTraceHeader = "step,lr,loss\n";

struct Dataset {
  std::vector<PairRecord> records;
  Vocabulary vocab;
};

struct TrainOptions {
  // Stop once this many steps have completed (the schedule still spans
  // total_steps), leaving a resumable checkpoint.
  std::optional<std::size_t> stop_at;
  // Called after every step, in order.
  std::function<void(const TraceRow&)> on_step;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TraceRow> trace;
};

// Fresh checkpoint at step 0: parameters, LoRA factors when the adapter
// mode asks for them, empty optimizer state.
Checkpoint initial_checkpoint(const ModelConfig& model,
                              const AdapterConfig& adapter,
                              const TrainConfig& train, const Vocabulary& vocab);

// Runs steps [start.step, total_steps) (or up to stop_at). Batch b of step s
// is drawn from the per-epoch permutation of the records, and instance
// negatives use a stream keyed by (seed, step, slot), so the trajectory
// depends only on (records, config) and resuming is exact.
TrainResult train(const Dataset& data, Checkpoint start,
                  const TrainOptions& options = {});

// Record indices used at a given step.
std::vector<std::size_t> batch_indices(std::size_t n_records,
                                       std::size_t batch_size,
                                       std::uint64_t seed, std::size_t step);

// Instances built for one step, as train() builds them.
std::vector<TrainInstance> step_instances(const Dataset& data,
                                          const TrainConfig& cfg,
                                          std::size_t max_len,
                                          std::size_t step);

}  // namespace uemb
