// Copyright 2026 The MalLight Authors. All rights reserved.
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
#include <map>
#include <optional>
#include <string>

namespace mallight {

/// Flat `key=value` configuration. Blank lines and `#` comments are skipped;
/// whitespace around keys and values is trimmed. Later keys override earlier
/// ones so command-line overrides can be layered on top of a file.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text,
                              const std::string& source = "<string>");
  static KeyValueConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value) {
    values_[key] = value;
  }
  bool contains(const std::string& key) const {
    return values_.count(key) != 0;
  }
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Keys with the given prefix, prefix stripped ("sim.tick" -> "tick").
  KeyValueConfig subset(const std::string& prefix) const;

  // Canonical `key=value\n` text in key order; the input of digest().
  std::string canonical() const;
  // 64-bit FNV-1a of canonical(), as 16 lowercase hex digits.
  std::string digest() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

std::string fnv1a_hex(const std::string& bytes);

}  // namespace mallight
