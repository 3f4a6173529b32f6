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

#include "uemb/flatconf.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "uemb/errors.hpp"

namespace uemb {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string_view strip_comment(std::string_view line) {
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '#' && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
      return line.substr(0, i);
    }
  }
  return line;
}

bool valid_key(std::string_view key) {
  if (key.empty() || key.front() == '.' || key.back() == '.') return false;
  for (char c : key) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '_' || c == '.' || c == '-';
    if (!ok) return false;
  }
  return key.find("..") == std::string_view::npos;
}

}  // namespace

FlatConfig FlatConfig::parse(std::string_view text, std::string source) {
  FlatConfig cfg;
  cfg.source_ = std::move(source);
  std::set<std::string, std::less<>> seen;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos
                                                                    : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    const auto line = trim(strip_comment(raw));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto at = [&](const std::string& msg) {
      return ConfigError(cfg.source_ + ": line " + std::to_string(lineno) + ": " + msg);
    };
    if (eq == std::string_view::npos) throw at("expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (!valid_key(key)) throw at("invalid key '" + std::string(key) + "'");
    if (value.empty()) throw at("empty value for '" + std::string(key) + "'");
    if (!seen.emplace(key).second) throw at("duplicate key '" + std::string(key) + "'");
    cfg.entries_.push_back(FlatEntry{std::string(key), std::string(value), lineno});
  }
  return cfg;
}

FlatConfig FlatConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

const FlatEntry* FlatConfig::find(std::string_view key) const {
  for (const FlatEntry& e : entries_) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

std::string FlatConfig::where(const FlatEntry& e) const {
  return source_ + ": line " + std::to_string(e.line);
}

std::uint64_t parse_u64(const FlatConfig& cfg, const FlatEntry& e) {
  std::uint64_t v = 0;
  const auto* end = e.value.data() + e.value.size();
  auto r = std::from_chars(e.value.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) {
    throw ConfigError(cfg.where(e) + ": " + e.key + " expects a non-negative integer, got '" +
                      e.value + "'");
  }
  return v;
}

std::size_t parse_count(const FlatConfig& cfg, const FlatEntry& e) {
  return static_cast<std::size_t>(parse_u64(cfg, e));
}

double parse_real(const FlatConfig& cfg, const FlatEntry& e) {
  double v = 0.0;
  const auto* end = e.value.data() + e.value.size();
  auto r = std::from_chars(e.value.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end || !std::isfinite(v)) {
    throw ConfigError(cfg.where(e) + ": " + e.key + " expects a number, got '" +
                      e.value + "'");
  }
  return v;
}

bool parse_flag(const FlatConfig& cfg, const FlatEntry& e) {
  if (e.value == "true" || e.value == "1") return true;
  if (e.value == "false" || e.value == "0") return false;
  throw ConfigError(cfg.where(e) + ": " + e.key + " expects true or false, got '" +
                    e.value + "'");
}

}  // namespace uemb
