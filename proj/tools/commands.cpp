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

#include "commands.hpp"

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sslvit/config.hpp"
#include "sslvit/errors.hpp"
#include "sslvit/kernels.hpp"
#include "sslvit/serialize.hpp"

namespace sslvit::cli {
namespace {

using nlohmann::json;

struct ConfigFlags {
  std::string path;

  RunConfig resolve() const { return path.empty() ? RunConfig{} : load_run_config(path); }
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
  cmd->add_option("--config", flags.path, "Run configuration (JSON); its \"seed\" drives all sampling");
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_hash(const std::string& path) { return hex64(fnv1a64(read_file(path))); }

json recall_report(const std::vector<std::size_t>& ks, const std::vector<double>& values) {
  json j = json::object();
  for (std::size_t i = 0; i < ks.size(); ++i) j["recall@" + std::to_string(ks[i])] = values[i];
  return j;
}

LossKind resolve_loss(const std::string& flag, LossKind fallback) {
  if (flag.empty()) return fallback;
  const auto kind = parse_loss_kind(flag);
  if (!kind) throw ConfigError("--loss: unknown value \"" + flag + "\" (valid: " + loss_kind_options() + ")");
  return *kind;
}

json cmd_synth(const ConfigFlags& flags, const std::string& out_path) {
  const RunConfig config = flags.resolve();
  config.require_seed("synth");
  const Dataset dataset = synth_dataset(config.data);
  write_dataset(dataset, out_path);
  return {{"command", "synth"},
          {"path", out_path},
          {"classes", dataset.classes.size()},
          {"samples", dataset.size()},
          {"channels", dataset.channels},
          {"height", dataset.height},
          {"width", dataset.width},
          {"seed", *config.seed},
          {"hash", file_hash(out_path)}};
}

json cmd_pretrain(const ConfigFlags& flags, const std::string& data_path, const std::string& out_path,
                  std::ostream& err) {
  const RunConfig config = flags.resolve();
  const std::uint64_t seed = config.require_seed("pretrain");
  const Dataset dataset = read_dataset(data_path);
  if (dataset.channels != config.vit.channels)
    throw InvalidArgument("pretrain: dataset has " + std::to_string(dataset.channels) +
                          " channels, vit.channels is " + std::to_string(config.vit.channels));
  const PretrainResult result = pretrain(dataset, config.vit, config.distill, seed);
  save_checkpoint(out_path, result.state.teacher);

  json steps = json::array();
  for (const auto& s : result.steps)
    steps.push_back({{"step", s.step}, {"epoch", s.epoch}, {"loss", s.loss}, {"lambda", s.lambda}});
  json probes = json::array();
  for (const auto& p : result.probes) probes.push_back({{"step", p.step}, {"entropy", p.entropy}});
  const std::string log_path = out_path + ".log.json";
  const std::string log = json{{"config", to_json(config)}, {"steps", steps}, {"probes", probes}}.dump();
  write_file_atomic(log_path, std::span(reinterpret_cast<const std::uint8_t*>(log.data()), log.size()));

  std::size_t epoch_begin = 0;
  for (std::size_t i = 0; i <= result.steps.size(); ++i) {
    if (i == result.steps.size() || result.steps[i].epoch != result.steps[epoch_begin].epoch) {
      double total = 0.0;
      for (std::size_t t = epoch_begin; t < i; ++t) total += result.steps[t].loss;
      err << "epoch " << result.steps[epoch_begin].epoch << " mean loss "
          << total / static_cast<double>(i - epoch_begin) << "\n";
      epoch_begin = i;
    }
  }
  return {{"command", "pretrain"},
          {"checkpoint", out_path},
          {"log", log_path},
          {"steps", result.steps.size()},
          {"final_loss", result.steps.back().loss},
          {"final_entropy", result.probes.empty() ? json(nullptr) : json(result.probes.back().entropy)},
          {"seed", seed},
          {"hash", file_hash(out_path)}};
}

json cmd_embed(const std::string& model_path, const std::string& data_path, const std::string& out_path,
               bool retrieval_head) {
  const ViTParams params = load_checkpoint(model_path);
  const Dataset dataset = read_dataset(data_path);
  const EmbedHead head = retrieval_head ? EmbedHead::kRetrieval : EmbedHead::kBackbone;
  const EmbeddingStore store = embed_dataset(params, dataset, head);
  write_embeddings(store, out_path);
  return {{"command", "embed"},
          {"path", out_path},
          {"rows", store.size()},
          {"dim", store.dim},
          {"head", retrieval_head ? "retrieval" : "backbone"},
          {"hash", file_hash(out_path)}};
}

json cmd_fewshot(const ConfigFlags& flags, const std::string& base_path, const std::string& novel_path,
                 std::optional<std::size_t> way, std::optional<std::size_t> shot,
                 std::optional<std::size_t> tasks) {
  RunConfig config = flags.resolve();
  if (way) config.fewshot.way = *way;
  if (shot) config.fewshot.shot = *shot;
  if (tasks) config.fewshot.tasks = *tasks;
  config.validate();
  const std::uint64_t seed = config.require_seed("fewshot");
  const EmbeddingStore base = read_embeddings(base_path);
  const EmbeddingStore novel = read_embeddings(novel_path);
  if (base.dim != novel.dim)
    throw InvalidArgument("fewshot: base dim " + std::to_string(base.dim) + " differs from novel dim " +
                          std::to_string(novel.dim));
  const auto stats = class_statistics(base);
  const FewShotConfig& fs = config.fewshot;
  const TaskSource source = [&](Rng& rng) {
    return sample_episode(novel, fs.way, fs.shot, fs.query_per_class, rng);
  };
  const FewShotSummary summary = evaluate_fewshot(source, fs.tasks, stats, fs, seed);
  return {{"way", fs.way},
          {"shot", fs.shot},
          {"tasks", fs.tasks},
          {"mean", summary.mean},
          {"ci95", summary.ci95 ? json(*summary.ci95) : json(nullptr)},
          {"config", to_json(config)}};
}

json cmd_retrieval_train(const ConfigFlags& flags, const std::string& model_path,
                         const std::string& data_path, const std::string& loss_flag,
                         const std::vector<std::size_t>& ks, const std::string& out_path,
                         std::ostream& err) {
  RunConfig config = flags.resolve();
  config.retrieval.loss = resolve_loss(loss_flag, config.retrieval.loss);
  const std::uint64_t seed = config.require_seed("retrieval train");
  const ViTParams teacher = load_checkpoint(model_path);
  const Dataset dataset = read_dataset(data_path);
  const double fractions[] = {config.retrieval.train_fraction, 1.0 - config.retrieval.train_fraction};
  const auto parts = split_classes(dataset, fractions);
  const Dataset& train = parts[0];
  const Dataset& test = parts[1];
  if (train.classes.size() < 2 || test.classes.empty())
    throw InvalidArgument("retrieval train: split left " + std::to_string(train.classes.size()) +
                          " train and " + std::to_string(test.classes.size()) + " test classes");

  RetrievalConfig initial = config.retrieval;
  initial.epochs = 0;
  const RetrievalModel before = finetune(teacher, train, initial, seed);
  const RetrievalModel after = finetune(teacher, train, config.retrieval, seed);
  const EmbeddingStore test_before = embed_dataset(before.params, test, EmbedHead::kRetrieval);
  const EmbeddingStore test_after = embed_dataset(after.params, test, EmbedHead::kRetrieval);
  const auto recall_before = recall_at_ks(test_before, test_before, ks, true);
  const auto recall_after = recall_at_ks(test_after, test_after, ks, true);
  for (std::size_t i = 0; i < ks.size(); ++i)
    err << "recall@" << ks[i] << " " << recall_before[i] << " -> " << recall_after[i] << "\n";

  json report = {{"command", "retrieval train"},
                 {"loss_kind", loss_kind_name(config.retrieval.loss)},
                 {"epochs", config.retrieval.epochs},
                 {"steps", after.steps.size()},
                 {"final_loss", after.steps.empty() ? json(nullptr) : json(after.steps.back().loss)},
                 {"train_classes", train.classes},
                 {"test_classes", test.classes},
                 {"initial", recall_report(ks, recall_before)}};
  report.update(recall_report(ks, recall_after));
  if (!out_path.empty()) {
    save_checkpoint(out_path, after.params);
    report["checkpoint"] = out_path;
    report["hash"] = file_hash(out_path);
  }
  report["config"] = to_json(config);
  return report;
}

json cmd_retrieval_eval(const ConfigFlags& flags, const std::string& model_path,
                        const std::string& data_path, const std::string& loss_flag,
                        const std::vector<std::size_t>& ks) {
  RunConfig config = flags.resolve();
  config.retrieval.loss = resolve_loss(loss_flag, config.retrieval.loss);
  const ViTParams params = load_checkpoint(model_path);
  const Dataset dataset = read_dataset(data_path);
  const bool has_head = params.retrieval.has_value();
  const EmbeddingStore store =
      embed_dataset(params, dataset, has_head ? EmbedHead::kRetrieval : EmbedHead::kNormalizedBackbone);
  json report = {{"command", "retrieval eval"},
                 {"loss_kind", loss_flag.empty() ? json(nullptr) : json(loss_kind_name(config.retrieval.loss))},
                 {"epochs", 0},
                 {"head", has_head ? "retrieval" : "backbone"},
                 {"samples", store.size()}};
  report.update(recall_report(ks, recall_at_ks(store, store, ks, true)));
  report["config"] = to_json(config);
  return report;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-supervised ViT embeddings, few-shot calibration and metric retrieval", "sslvit"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 1;
  app.add_option("--threads", threads, "Worker threads (default 1)")
      ->envname("SSLVIT_THREADS")
      ->check(CLI::PositiveNumber);

  ConfigFlags flags;
  std::string out_path, data_path, model_path, base_path, novel_path, loss_flag;
  std::optional<std::size_t> way, shot, tasks;
  bool retrieval_head = false;
  std::vector<std::size_t> ks{1, 2, 4, 8};

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  add_config_flags(synth, flags);
  synth->add_option("--out", out_path, "Dataset file to write")->required();

  auto* pre = app.add_subcommand("pretrain", "Self-distillation pretraining; log goes to <out>.log.json");
  add_config_flags(pre, flags);
  pre->add_option("--data", data_path, "Dataset file")->required();
  pre->add_option("--out", out_path, "Teacher checkpoint to write")->required();

  auto* embed = app.add_subcommand("embed", "Embed a dataset with a checkpoint");
  embed->add_option("--model", model_path, "Checkpoint file")->required();
  embed->add_option("--data", data_path, "Dataset file")->required();
  embed->add_option("--out", out_path, "Embedding file to write")->required();
  embed->add_flag("--retrieval-head", retrieval_head, "Use the retrieval projection");

  auto* fewshot = app.add_subcommand("fewshot", "Episodic few-shot evaluation");
  add_config_flags(fewshot, flags);
  fewshot->add_option("--base-emb", base_path, "Base-class embeddings")->required();
  fewshot->add_option("--novel-emb", novel_path, "Novel-class embeddings")->required();
  fewshot->add_option("--way", way, "Classes per task")->check(CLI::PositiveNumber);
  fewshot->add_option("--shot", shot, "Support examples per class")->check(CLI::PositiveNumber);
  fewshot->add_option("--tasks", tasks, "Number of tasks")->check(CLI::PositiveNumber);

  auto* retrieval = app.add_subcommand("retrieval", "Metric-learning fine-tuning and Recall@K");
  retrieval->require_subcommand(1);
  auto* rtrain = retrieval->add_subcommand("train", "Fine-tune on train classes, evaluate on the rest");
  auto* reval = retrieval->add_subcommand("eval", "Recall@K of a checkpoint on a dataset");
  for (auto* cmd : {rtrain, reval}) {
    add_config_flags(cmd, flags);
    cmd->add_option("--model", model_path, "Checkpoint file")->required();
    cmd->add_option("--data", data_path, "Dataset file")->required();
    cmd->add_option("--loss", loss_flag, "margin | proxy_nca | multi_similarity");
    cmd->add_option("--k", ks, "Recall cutoffs")->delimiter(',')->check(CLI::PositiveNumber);
  }
  rtrain->add_option("--out", out_path, "Fine-tuned checkpoint to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    kernels::set_num_threads(threads);
    json report;
    if (synth->parsed()) {
      report = cmd_synth(flags, out_path);
    } else if (pre->parsed()) {
      report = cmd_pretrain(flags, data_path, out_path, err);
    } else if (embed->parsed()) {
      report = cmd_embed(model_path, data_path, out_path, retrieval_head);
    } else if (fewshot->parsed()) {
      report = cmd_fewshot(flags, base_path, novel_path, way, shot, tasks);
    } else if (rtrain->parsed()) {
      report = cmd_retrieval_train(flags, model_path, data_path, loss_flag, ks, out_path, err);
    } else {
      report = cmd_retrieval_eval(flags, model_path, data_path, loss_flag, ks);
    }
    out << report.dump() << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace sslvit::cli
