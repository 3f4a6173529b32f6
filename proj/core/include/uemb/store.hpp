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
#include <span>
#include <string>
#include <vector>

#include "uemb/tensor.hpp"

namespace uemb {

inline constexpr std::uint32_t kStoreVersion = 1;
inline constexpr std::uint8_t kStoreDtypeF32 = 1;
inline constexpr std::size_t kStoreHeaderBytes = 28;

// Embedding matrix as stored on disk: f32 rows plus one id per row.
struct EmbeddingStore {
  std::vector<std::string> ids;
  std::size_t dim = 0;
  std::vector<float> data;  // ids.size() × dim, row-major

  std::size_t count() const { return ids.size(); }
  // Widened to f64, [count × dim].
  Tensor to_tensor() const;
  friend bool operator==(const EmbeddingStore&, const EmbeddingStore&) = default;
};

// Path of the id sidecar for a store file.
std::filesystem::path store_ids_path(const std::filesystem::path& path);

// Writes matrix [n×d] (rounded to f32, nearest-even) and ids (n unique ids
// without line breaks) to path and its sidecar.
void write_store(const Tensor& matrix, std::span<const std::string> ids,
                 const std::filesystem::path& path);
void write_store(const EmbeddingStore& store, const std::filesystem::path& path);

EmbeddingStore read_store(const std::filesystem::path& path);

}  // namespace uemb
