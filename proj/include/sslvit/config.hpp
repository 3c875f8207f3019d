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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>

#include <json.hpp>

#include "sslvit/data.hpp"
#include "sslvit/distill.hpp"
#include "sslvit/fewshot.hpp"
#include "sslvit/retrieval.hpp"
#include "sslvit/vit.hpp"

namespace sslvit {

/// Top-level run configuration. Every section and field is optional; missing
/// values take the struct defaults. Unknown keys are rejected.
struct RunConfig {
  ViTConfig vit;
  DistillConfig distill;
  FewShotConfig fewshot;
  RetrievalConfig retrieval;
  SynthOptions data;
  std::optional<std::uint64_t> seed;

  /// The seed, or a ConfigError naming the command that needs one.
  std::uint64_t require_seed(std::string_view command) const;
  /// Range checks on every section; ConfigError on failure.
  void validate() const;
};

/// Parses a JSON document. Syntax errors report line and column.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig run_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RunConfig& config);
nlohmann::json to_json(const DistillConfig& config);
nlohmann::json to_json(const FewShotConfig& config);
nlohmann::json to_json(const RetrievalConfig& config);
nlohmann::json to_json(const SynthOptions& options);

}  // namespace sslvit
