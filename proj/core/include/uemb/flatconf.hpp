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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace uemb {

struct FlatEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

// `section.key = value` lines. A '#' at the start of a line or after
// whitespace begins a comment. Duplicate keys are ConfigErrors.
class FlatConfig {
 public:
  static FlatConfig parse(std::string_view text, std::string source = "<config>");
  static FlatConfig load(const std::filesystem::path& path);

  const std::vector<FlatEntry>& entries() const { return entries_; }
  const std::string& source() const { return source_; }
  const FlatEntry* find(std::string_view key) const;

  // "<source>: line N: message"
  std::string where(const FlatEntry& e) const;

 private:
  std::string source_;
  std::vector<FlatEntry> entries_;
};

// Value parsers that name the offending entry on failure.
std::size_t parse_count(const FlatConfig& cfg, const FlatEntry& e);
std::uint64_t parse_u64(const FlatConfig& cfg, const FlatEntry& e);
double parse_real(const FlatConfig& cfg, const FlatEntry& e);
bool parse_flag(const FlatConfig& cfg, const FlatEntry& e);

}  // namespace uemb
