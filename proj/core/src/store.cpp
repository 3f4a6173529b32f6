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

#include "uemb/store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "uemb/errors.hpp"

namespace uemb {

namespace {

constexpr unsigned char kMagic[4] = {'U', 'E', 'M', 'B'};

template <typename T>
void put_le(std::vector<unsigned char>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
}

template <typename T>
T get_le(const unsigned char* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(T{p[i]} << (8 * i));
  return v;
}

void check_ids(std::span<const std::string> ids, const std::string& where) {
  std::set<std::string_view> seen;
  for (const std::string& id : ids) {
    if (id.find_first_of("\r\n") != std::string::npos) {
      throw DataError(where + ": id contains a line break");
    }
    if (!seen.insert(id).second) throw DataError(where + ": duplicate id '" + id + "'");
  }
}

}  // namespace

Tensor EmbeddingStore::to_tensor() const {
  std::vector<double> values(data.begin(), data.end());
  return Tensor({count(), dim}, std::move(values));
}

std::filesystem::path store_ids_path(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p += ".ids";
  return p;
}

void write_store(const Tensor& matrix, std::span<const std::string> ids,
                 const std::filesystem::path& path) {
  if (matrix.rank() != 2) {
    throw DimensionError("write_store: expected a matrix, got " +
                         shape_string(matrix.shape()));
  }
  EmbeddingStore s;
  s.ids.assign(ids.begin(), ids.end());
  s.dim = matrix.shape()[1];
  if (matrix.shape()[0] != ids.size()) {
    throw DimensionError("write_store: " + std::to_string(matrix.shape()[0]) +
                         " rows but " + std::to_string(ids.size()) + " ids");
  }
  s.data.reserve(matrix.size());
  for (double v : matrix.values()) {
    if (!std::isfinite(v)) throw ContractError("write_store: non-finite value");
    const float f = static_cast<float>(v);
    if (!std::isfinite(f)) throw ContractError("write_store: value overflows f32");
    s.data.push_back(f);
  }
  write_store(s, path);
}

void write_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  if (store.data.size() != store.count() * store.dim) {
    throw DimensionError("write_store: data size does not match count x dim");
  }
  if (store.dim > UINT32_MAX) throw DimensionError("write_store: dim exceeds u32");
  check_ids(store.ids, path.string());

  std::vector<unsigned char> bytes(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(bytes, kStoreVersion);
  put_le<std::uint64_t>(bytes, store.count());
  put_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(store.dim));
  bytes.push_back(kStoreDtypeF32);
  bytes.insert(bytes.end(), 7, 0);
  for (float f : store.data) put_le<std::uint32_t>(bytes, std::bit_cast<std::uint32_t>(f));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  std::ofstream ids_out(store_ids_path(path), std::ios::binary | std::ios::trunc);
  if (!ids_out) throw DataError("cannot write " + store_ids_path(path).string());
  for (const std::string& id : store.ids) ids_out << id << '\n';
  if (!out || !ids_out) throw DataError("failed writing " + path.string());
}

EmbeddingStore read_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  const std::string where = path.string();
  if (bytes.size() < kStoreHeaderBytes) throw FormatError(where + ": truncated header");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError(where + ": bad magic (expected UEMB)");
  }
  const auto version = get_le<std::uint32_t>(&bytes[4]);
  if (version != kStoreVersion) {
    throw FormatError(where + ": store version " + std::to_string(version) +
                      " is not supported (expected " + std::to_string(kStoreVersion) +
                      ")");
  }
  const auto count = get_le<std::uint64_t>(&bytes[8]);
  const auto dim = get_le<std::uint32_t>(&bytes[16]);
  if (bytes[20] != kStoreDtypeF32) {
    throw FormatError(where + ": unsupported dtype " + std::to_string(bytes[20]));
  }
  for (std::size_t i = 21; i < kStoreHeaderBytes; ++i) {
    if (bytes[i] != 0) throw FormatError(where + ": reserved header bytes are not zero");
  }
  const std::uint64_t payload = bytes.size() - kStoreHeaderBytes;
  if (dim != 0 && count > payload / 4 / dim) {
    throw FormatError(where + ": size mismatch (header says " + std::to_string(count) +
                      "x" + std::to_string(dim) + ")");
  }
  if (count * dim * 4 != payload) {
    throw FormatError(where + ": size mismatch (header says " + std::to_string(count) +
                      "x" + std::to_string(dim) + ", file holds " +
                      std::to_string(payload) + " data bytes)");
  }

  EmbeddingStore s;
  s.dim = dim;
  s.data.resize(count * dim);
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    s.data[i] = std::bit_cast<float>(get_le<std::uint32_t>(&bytes[kStoreHeaderBytes + 4 * i]));
  }

  std::ifstream ids_in(store_ids_path(path), std::ios::binary);
  if (!ids_in) throw DataError("cannot open " + store_ids_path(path).string());
  std::string line;
  while (std::getline(ids_in, line)) s.ids.push_back(line);
  if (s.ids.size() != count) {
    throw DataError(store_ids_path(path).string() + ": " + std::to_string(s.ids.size()) +
                    " ids for " + std::to_string(count) + " rows");
  }
  check_ids(s.ids, store_ids_path(path).string());
  return s;
}

}  // namespace uemb
