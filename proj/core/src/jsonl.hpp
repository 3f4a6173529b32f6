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

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "json.hpp"
#include "uemb/errors.hpp"

namespace uemb::detail {

using json = nlohmann::json;

// Calls fn(object, line_number) for each non-blank line. Lines are 1-based.
inline void for_each_jsonl(
    const std::filesystem::path& path,
    const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error&) {
      throw DataError(path.string() + ": line " + std::to_string(lineno) +
                      ": malformed JSON");
    }
    if (!obj.is_object()) {
      throw DataError(path.string() + ": line " + std::to_string(lineno) +
                      ": expected a JSON object");
    }
    fn(obj, lineno);
  }
}

inline const json& require_field(const json& obj, const char* field,
                                 std::size_t lineno) {
  auto it = obj.find(field);
  if (it == obj.end()) {
    throw SchemaError("line " + std::to_string(lineno) + ": missing field " +
                      field);
  }
  return *it;
}

inline std::string require_string(const json& obj, const char* field,
                                  std::size_t lineno) {
  const json& v = require_field(obj, field, lineno);
  if (!v.is_string()) {
    throw SchemaError("line " + std::to_string(lineno) + ": field " + field +
                      " must be a string");
  }
  return v.get<std::string>();
}

inline double require_number(const json& obj, const char* field,
                             std::size_t lineno) {
  const json& v = require_field(obj, field, lineno);
  if (!v.is_number()) {
    throw SchemaError("line " + std::to_string(lineno) + ": field " + field +
                      " must be a number");
  }
  return v.get<double>();
}

}  // namespace uemb::detail
