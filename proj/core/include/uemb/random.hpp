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

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace uemb {

using Rng = std::mt19937_64;

// splitmix64 finalizer; folds a seed and a path of stream labels into an
// independent seed so every consumer gets its own reproducible stream.
std::uint64_t derive_seed(std::uint64_t seed,
                          std::initializer_list<std::uint64_t> path);

inline Rng make_rng(std::uint64_t seed,
                    std::initializer_list<std::uint64_t> path = {}) {
  return Rng(derive_seed(seed, path));
}

// Uniform integer in [0, n) by rejection; portable across standard libraries.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

// Uniform real in [0, 1) from the top 53 bits.
double uniform_unit(Rng& rng);

// Standard normal via Box-Muller on uniform_unit (portable, unlike
// std::normal_distribution).
double standard_normal(Rng& rng);

// First k entries of a seeded partial Fisher-Yates shuffle of [0, n).
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n,
                                                    std::size_t k);

// Full Fisher-Yates permutation of [0, n).
std::vector<std::size_t> permutation(Rng& rng, std::size_t n);

}  // namespace uemb
