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

#include "sslvit/config.hpp"

#include <string>

#include "sslvit/errors.hpp"
#include "sslvit/json_util.hpp"
#include "sslvit/serialize.hpp"

namespace sslvit {
namespace {

using json_util::read_field;
using json_util::require_known_keys;
using nlohmann::json;

const json& section_or_empty(const json& root, const char* name) {
  static const json empty = json::object();
  auto it = root.find(name);
  if (it == root.end()) return empty;
  if (!it->is_object()) throw ConfigError(std::string(name) + ": expected an object");
  return *it;
}

DistillConfig distill_from_json(const json& j) {
  require_known_keys(j, "distill",
                     {"tau_s", "tau_t", "num_local_views", "global_size", "local_size",
                      "lambda_base", "epochs", "steps_per_epoch", "batch_size", "learning_rate",
                      "momentum", "weight_decay", "centering", "center_momentum",
                      "teacher_update", "probe_every", "probe_size"});
  DistillConfig c;
  read_field(j, "distill", "tau_s", c.tau_s);
  read_field(j, "distill", "tau_t", c.tau_t);
  read_field(j, "distill", "num_local_views", c.num_local_views);
  read_field(j, "distill", "global_size", c.global_size);
  read_field(j, "distill", "local_size", c.local_size);
  read_field(j, "distill", "lambda_base", c.lambda_base);
  read_field(j, "distill", "epochs", c.epochs);
  read_field(j, "distill", "steps_per_epoch", c.steps_per_epoch);
  read_field(j, "distill", "batch_size", c.batch_size);
  read_field(j, "distill", "learning_rate", c.learning_rate);
  read_field(j, "distill", "momentum", c.momentum);
  read_field(j, "distill", "weight_decay", c.weight_decay);
  read_field(j, "distill", "centering", c.centering_enabled);
  read_field(j, "distill", "center_momentum", c.center_momentum);
  read_field(j, "distill", "probe_every", c.probe_every);
  read_field(j, "distill", "probe_size", c.probe_size);
  std::string update = "step";
  read_field(j, "distill", "teacher_update", update);
  if (update == "step") {
    c.teacher_update = TeacherUpdate::kPerStep;
  } else if (update == "epoch") {
    c.teacher_update = TeacherUpdate::kPerEpoch;
  } else {
    throw ConfigError("distill.teacher_update: unknown value \"" + update + "\" (valid: step, epoch)");
  }
  return c;
}

FewShotConfig fewshot_from_json(const json& j) {
  require_known_keys(j, "fewshot",
                     {"k", "alpha", "n_augment", "l2", "max_iter", "grad_tol", "way", "shot",
                      "query_per_class", "tasks"});
  FewShotConfig c;
  read_field(j, "fewshot", "k", c.k);
  read_field(j, "fewshot", "alpha", c.alpha);
  read_field(j, "fewshot", "n_augment", c.n_augment);
  read_field(j, "fewshot", "l2", c.logistic.l2);
  read_field(j, "fewshot", "max_iter", c.logistic.max_iter);
  read_field(j, "fewshot", "grad_tol", c.logistic.grad_tol);
  read_field(j, "fewshot", "way", c.way);
  read_field(j, "fewshot", "shot", c.shot);
  read_field(j, "fewshot", "query_per_class", c.query_per_class);
  read_field(j, "fewshot", "tasks", c.tasks);
  return c;
}

RetrievalConfig retrieval_from_json(const json& j) {
  require_known_keys(j, "retrieval",
                     {"embed_dim", "loss", "epochs", "steps_per_epoch", "classes_per_batch",
                      "samples_per_class", "learning_rate", "momentum", "weight_decay", "proxy_lr",
                      "beta_lr", "margin_alpha", "margin_beta", "sampling", "ms_alpha", "ms_beta",
                      "ms_lambda", "ms_epsilon", "train_fraction"});
  RetrievalConfig c;
  read_field(j, "retrieval", "embed_dim", c.embed_dim);
  read_field(j, "retrieval", "epochs", c.epochs);
  read_field(j, "retrieval", "steps_per_epoch", c.steps_per_epoch);
  read_field(j, "retrieval", "classes_per_batch", c.classes_per_batch);
  read_field(j, "retrieval", "samples_per_class", c.samples_per_class);
  read_field(j, "retrieval", "learning_rate", c.learning_rate);
  read_field(j, "retrieval", "momentum", c.momentum);
  read_field(j, "retrieval", "weight_decay", c.weight_decay);
  read_field(j, "retrieval", "proxy_lr", c.proxy_lr);
  read_field(j, "retrieval", "beta_lr", c.beta_lr);
  read_field(j, "retrieval", "margin_alpha", c.margin_alpha);
  read_field(j, "retrieval", "margin_beta", c.margin_beta);
  read_field(j, "retrieval", "ms_alpha", c.ms_alpha);
  read_field(j, "retrieval", "ms_beta", c.ms_beta);
  read_field(j, "retrieval", "ms_lambda", c.ms_lambda);
  read_field(j, "retrieval", "ms_epsilon", c.ms_epsilon);
  read_field(j, "retrieval", "train_fraction", c.train_fraction);
  std::string loss(loss_kind_name(c.loss));
  read_field(j, "retrieval", "loss", loss);
  const auto kind = parse_loss_kind(loss);
  if (!kind)
    throw ConfigError("retrieval.loss: unknown value \"" + loss + "\" (valid: " + loss_kind_options() + ")");
  c.loss = *kind;
  std::string sampling = "distance_weighted";
  read_field(j, "retrieval", "sampling", sampling);
  if (sampling == "distance_weighted") {
    c.sampling = PairSampling::kDistanceWeighted;
  } else if (sampling == "all") {
    c.sampling = PairSampling::kAll;
  } else {
    throw ConfigError("retrieval.sampling: unknown value \"" + sampling +
                      "\" (valid: distance_weighted, all)");
  }
  return c;
}

SynthOptions data_from_json(const json& j) {
  require_known_keys(j, "data",
                     {"num_classes", "per_class", "image_size", "channels", "noise_std", "max_shift"});
  SynthOptions o;
  read_field(j, "data", "num_classes", o.num_classes);
  read_field(j, "data", "per_class", o.per_class);
  read_field(j, "data", "image_size", o.image_size);
  read_field(j, "data", "channels", o.channels);
  read_field(j, "data", "noise_std", o.noise_std);
  read_field(j, "data", "max_shift", o.max_shift);
  return o;
}

}  // namespace

std::uint64_t RunConfig::require_seed(std::string_view command) const {
  if (!seed) throw ConfigError(std::string(command) + ": a seed is required (config key \"seed\")");
  return *seed;
}

void RunConfig::validate() const {
  try {
    vit.validate();
    distill.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  retrieval.validate();
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  const auto& f = fewshot;
  if (f.k == 0) fail("fewshot.k must be positive");
  if (!(f.alpha >= 0.0)) fail("fewshot.alpha must be nonnegative");
  if (f.way < 2) fail("fewshot.way must be at least 2");
  if (f.shot == 0 || f.query_per_class == 0) fail("fewshot.shot and fewshot.query_per_class must be positive");
  if (f.tasks == 0) fail("fewshot.tasks must be positive");
  if (!(f.logistic.l2 >= 0.0)) fail("fewshot.l2 must be nonnegative");
  if (f.logistic.max_iter == 0) fail("fewshot.max_iter must be positive");
  if (!(f.logistic.grad_tol > 0.0)) fail("fewshot.grad_tol must be positive");
  if (data.num_classes == 0 || data.per_class == 0 || data.image_size == 0 || data.channels == 0)
    fail("data counts must be positive");
  if (!(data.noise_std >= 0.0)) fail("data.noise_std must be nonnegative");
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  require_known_keys(j, "config", {"vit", "distill", "fewshot", "retrieval", "data", "seed"});
  RunConfig c;
  c.vit = vit_config_from_json(section_or_empty(j, "vit"));
  c.distill = distill_from_json(section_or_empty(j, "distill"));
  c.fewshot = fewshot_from_json(section_or_empty(j, "fewshot"));
  c.retrieval = retrieval_from_json(section_or_empty(j, "retrieval"));
  c.data = data_from_json(section_or_empty(j, "data"));
  if (auto it = j.find("seed"); it != j.end() && !it->is_null()) {
    if (!it->is_number_unsigned()) throw ConfigError("seed: expected a nonnegative integer");
    c.seed = it->get<std::uint64_t>();
    c.data.seed = *c.seed;
  }
  c.validate();
  return c;
}

RunConfig parse_run_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    std::size_t line = 1, column = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ConfigError("config: parse error at line " + std::to_string(line) + ", column " +
                      std::to_string(column) + ": " + e.what());
  }
  return run_config_from_json(j);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_run_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

json to_json(const DistillConfig& c) {
  return {{"tau_s", c.tau_s},
          {"tau_t", c.tau_t},
          {"num_local_views", c.num_local_views},
          {"global_size", c.global_size},
          {"local_size", c.local_size},
          {"lambda_base", c.lambda_base},
          {"epochs", c.epochs},
          {"steps_per_epoch", c.steps_per_epoch},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"centering", c.centering_enabled},
          {"center_momentum", c.center_momentum},
          {"teacher_update", c.teacher_update == TeacherUpdate::kPerStep ? "step" : "epoch"},
          {"probe_every", c.probe_every},
          {"probe_size", c.probe_size}};
}

json to_json(const FewShotConfig& c) {
  return {{"k", c.k},
          {"alpha", c.alpha},
          {"n_augment", c.n_augment},
          {"l2", c.logistic.l2},
          {"max_iter", c.logistic.max_iter},
          {"grad_tol", c.logistic.grad_tol},
          {"way", c.way},
          {"shot", c.shot},
          {"query_per_class", c.query_per_class},
          {"tasks", c.tasks}};
}

json to_json(const RetrievalConfig& c) {
  return {{"embed_dim", c.embed_dim},
          {"loss", loss_kind_name(c.loss)},
          {"epochs", c.epochs},
          {"steps_per_epoch", c.steps_per_epoch},
          {"classes_per_batch", c.classes_per_batch},
          {"samples_per_class", c.samples_per_class},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"proxy_lr", c.proxy_lr},
          {"beta_lr", c.beta_lr},
          {"margin_alpha", c.margin_alpha},
          {"margin_beta", c.margin_beta},
          {"sampling", c.sampling == PairSampling::kAll ? "all" : "distance_weighted"},
          {"ms_alpha", c.ms_alpha},
          {"ms_beta", c.ms_beta},
          {"ms_lambda", c.ms_lambda},
          {"ms_epsilon", c.ms_epsilon},
          {"train_fraction", c.train_fraction}};
}

json to_json(const SynthOptions& o) {
  return {{"num_classes", o.num_classes}, {"per_class", o.per_class},
          {"image_size", o.image_size},   {"channels", o.channels},
          {"noise_std", o.noise_std},     {"max_shift", o.max_shift}};
}

json to_json(const RunConfig& c) {
  json j = {{"vit", to_json(c.vit)},
            {"distill", to_json(c.distill)},
            {"fewshot", to_json(c.fewshot)},
            {"retrieval", to_json(c.retrieval)},
            {"data", to_json(c.data)}};
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  return j;
}

}  // namespace sslvit
