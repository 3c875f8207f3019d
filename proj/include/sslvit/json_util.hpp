// Copyright 2026 The sslvit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "sslvit/errors.hpp"

namespace sslvit::json_util {

/// Rejects keys of `j` outside `allowed` (typo safety).
inline void require_known_keys(const nlohmann::json& j, std::string_view section,
                               std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(section) + ": expected a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || item.key() == a;
    if (!known) {
      std::string msg = std::string(section) + ": unknown key \"" + item.key() + "\" (valid:";
      for (auto a : allowed) msg += " " + std::string(a);
      throw ConfigError(msg + ")");
    }
  }
}

/// Overwrites `out` with j[key] when present; type errors name the key.
template <typename T>
void read_field(const nlohmann::json& j, std::string_view section, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(section) + "." + key + ": " + e.what());
  }
}

}  // namespace sslvit::json_util
