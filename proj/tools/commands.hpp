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
#include <iosfwd>
#include <optional>

#include "uemb/corpus.hpp"

namespace uemb::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitVerificationFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumericalAbort = 3;

struct Io {
  std::ostream& out;
  std::ostream& err;
};

struct TrainFlags {
  bool dry_run = false;
  // Continue from paths.checkpoint when it exists.
  bool resume = false;
  std::optional<std::size_t> stop_at;
};

struct SynthFlags {
  std::uint64_t seed = 0;
  std::size_t facts = 50;
  std::size_t train = 1000;
  std::size_t eval = 50;
};

int cmd_train(const std::filesystem::path& config, const TrainFlags& flags, Io io);
int cmd_encode(const std::filesystem::path& checkpoint, const std::filesystem::path& input,
               InputType type, const std::filesystem::path& out, Io io);
int cmd_eval(const std::filesystem::path& config, bool from_stores, Io io);
int cmd_report(const std::filesystem::path& in, const std::filesystem::path& out_dir, Io io);
int cmd_gradcheck(const std::filesystem::path& config, Io io);
int cmd_synth(const SynthFlags& flags, const std::filesystem::path& out, Io io);
// Prints every configuration key with its value (defaults when config is
// empty).
int cmd_config(const std::filesystem::path& config, Io io);

// Full command line: parses argv and dispatches.
int run(int argc, const char* const* argv, Io io);

}  // namespace uemb::cli
