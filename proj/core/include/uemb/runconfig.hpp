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
#include <string>
#include <string_view>
#include <vector>

#include "uemb/autodiff.hpp"
#include "uemb/corpus.hpp"
#include "uemb/model.hpp"
#include "uemb/trainer.hpp"

namespace uemb {

struct PathsConfig {
  std::filesystem::path train_data;
  // Extra JSON Lines files whose strings join the training texts when the
  // byte vocabulary is built.
  std::vector<std::filesystem::path> vocab_sources;
  std::filesystem::path checkpoint;
  std::filesystem::path trace;
  std::filesystem::path report_dir;
};

struct BenchConfig {
  std::filesystem::path manifest;
  // Parallel {"id","a","b"} file projected into projection.csv by eval.
  std::filesystem::path projection;
};

struct GradcheckConfig {
  std::size_t trials = 20;
  std::size_t coords = 64;  // sampled per trial, 0 = all
  std::size_t batch = 2;
  std::size_t seq_len = 8;  // content tokens per sequence, at most
  ad::debug::Fault fault = ad::debug::Fault::none;
};

std::string_view to_string(ad::debug::Fault f);
ad::debug::Fault parse_fault(std::string_view s);

struct RunConfig {
  ModelConfig model;
  AdapterConfig adapter{AdapterMode::lora, 8, 8.0};
  TrainConfig train;
  PairFormat data_format = PairFormat::asym;
  BenchConfig bench;
  PathsConfig paths;
  std::uint64_t seed = 0;
  GradcheckConfig gradcheck;

  void validate() const;
};

// Unknown keys are ConfigErrors. Relative paths resolve against base_dir.
// adapter.alpha defaults to adapter.rank; `seed` also seeds training.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir,
                           const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

// Every key with its current value, in a form parse_run_config accepts.
// Unset paths are emitted as comments.
std::string dump_run_config(const RunConfig& cfg);

}  // namespace uemb
