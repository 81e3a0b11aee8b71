// Copyright (c) 2026 The xvec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
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

#include "json.hpp"
#include "xvec/error.hpp"

namespace xvec {

using Json = nlohmann::json;

// Rejects keys of `object` that are not listed, naming the first offender.
inline void require_known_keys(const Json& object, std::initializer_list<std::string_view> allowed,
                               const std::string& context) {
  if (!object.is_object()) throw ConfigError(context + ": expected a JSON object");
  for (const auto& item : object.items()) {
    bool known = false;
    for (auto key : allowed) known = known || item.key() == key;
    if (!known) throw ConfigError(context + ": unknown key \"" + item.key() + "\"");
  }
}

// Reads object[key] into `out` when present; type errors name the field.
template <typename T>
void read_field(const Json& object, const char* key, T& out, const std::string& context) {
  auto it = object.find(key);
  if (it == object.end()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(context + "." + key + ": " + e.what());
  }
}

}  // namespace xvec
