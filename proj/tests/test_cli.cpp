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

#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "commands.hpp"
#include "sslvit/data.hpp"
#include "sslvit/serialize.hpp"
#include "sslvit/vit.hpp"

using namespace sslvit;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
  json report() const { return json::parse(out); }
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "sslvit");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
 public:
  TempDir() : path_(std::filesystem::temp_directory_path() / "sslvit_test_cli") {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

// Tiny end-to-end configuration: 1-channel 12 px images, 1-block encoder.
constexpr const char* kTinyConfig = R"({
  "data": {"num_classes": 6, "per_class": 8, "image_size": 12, "channels": 1},
  "vit": {"image_size": 8, "patch_size": 4, "channels": 1, "depth": 1, "heads": 2, "dim": 8,
          "mlp_ratio": 2.0, "out_dim": 8},
  "distill": {"global_size": 8, "local_size": 4, "num_local_views": 2, "epochs": 2,
              "steps_per_epoch": 2, "batch_size": 4, "probe_every": 0},
  "fewshot": {"n_augment": 5, "way": 3, "shot": 1, "query_per_class": 2, "tasks": 4},
  "retrieval": {"embed_dim": 4, "epochs": 1, "steps_per_epoch": 2, "classes_per_batch": 2,
                "samples_per_class": 2}
})";

/// Writes `base` (JSON text) with its seed set, returns the path.
std::string write_config(const TempDir& dir, const std::string& name, const std::string& base,
                         std::optional<std::uint64_t> seed) {
  json j = json::parse(base);
  if (seed) j["seed"] = *seed;
  std::ofstream(dir.file(name)) << j.dump(2);
  return dir.file(name);
}

// Well separated classes: class c sits at 4 on axis c % 3, scaled by c / 3 + 1.
EmbeddingStore feature_store(std::size_t classes, std::size_t per_class, ClassId first) {
  EmbeddingStore s;
  s.dim = 3;
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      s.labels.push_back(first + static_cast<ClassId>(c));
      for (std::size_t j = 0; j < 3; ++j)
        s.values.push_back((j == c % 3 ? 4.0 * static_cast<double>(c / 3 + 1) : 0.0) +
                           0.1 * static_cast<double>((i * 7 + j * 3) % 5));
    }
  return s;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit with 2") {
    CHECK(invoke({}).code == cli::kExitUsage);
    CHECK(invoke({"frobnicate"}).code == cli::kExitUsage);
    CHECK(invoke({"synth"}).code == cli::kExitUsage);
    CHECK(invoke({"synth", "--seed", "3", "--out", "x"}).code == cli::kExitUsage);
    CHECK(invoke({"--threads", "0", "synth", "--out", "x"}).code == cli::kExitUsage);
    CHECK(invoke({"--help"}).code == cli::kExitOk);
  }

  TEST_CASE("synth needs a seed") {
    TempDir dir;
    const Result r = invoke({"synth", "--out", dir.file("d.ssld")});
    CHECK(r.code == cli::kExitUsage);
    CHECK(r.err.find("seed") != std::string::npos);
  }

  TEST_CASE("synth is deterministic and reports the file hash") {
    TempDir dir;
    const auto c3 = write_config(dir, "c3.json", kTinyConfig, 3);
    const auto c4 = write_config(dir, "c4.json", kTinyConfig, 4);
    const Result a = invoke({"synth", "--config", c3, "--out", dir.file("a.ssld")});
    const Result b = invoke({"synth", "--config", c3, "--out", dir.file("b.ssld")});
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    CHECK(a.report()["hash"] == b.report()["hash"]);
    CHECK(a.report()["hash"] == hex(fnv1a64(read_file(dir.file("a.ssld")))));
    const Result c = invoke({"synth", "--config", c4, "--out", dir.file("c.ssld")});
    CHECK(c.report()["hash"] != a.report()["hash"]);
  }

  TEST_CASE("missing input files exit with 1") {
    TempDir dir;
    const Result r = invoke({"embed", "--model", dir.file("none.svtc"), "--data", dir.file("none.ssld"),
                             "--out", dir.file("e.ssle")});
    CHECK(r.code == cli::kExitFailure);
    CHECK_FALSE(r.err.empty());
  }

  TEST_CASE("malformed config exits with 2") {
    TempDir dir;
    std::ofstream(dir.file("bad.json")) << "{\"seed\": 1,,}";
    const Result r = invoke({"synth", "--config", dir.file("bad.json"), "--out", dir.file("d.ssld")});
    CHECK(r.code == cli::kExitUsage);
    CHECK(r.err.find("line 1") != std::string::npos);
  }

  TEST_CASE("few-shot report with one task has a null interval") {
    TempDir dir;
    write_embeddings(feature_store(4, 10, 0), dir.file("base.ssle"));
    write_embeddings(feature_store(5, 6, 100), dir.file("novel.ssle"));
    const auto cfg = write_config(dir, "c.json", R"({"fewshot": {"n_augment": 10, "query_per_class": 3}})", 1);
    const std::vector<std::string> common{"fewshot", "--config", cfg, "--base-emb", dir.file("base.ssle"),
                                          "--novel-emb", dir.file("novel.ssle"), "--way", "3", "--shot", "1"};
    auto one = common;
    one.insert(one.end(), {"--tasks", "1"});
    const Result r = invoke(one);
    REQUIRE(r.code == 0);
    const json j = r.report();
    CHECK(j["tasks"] == 1);
    CHECK(j["ci95"].is_null());
    CHECK(j["way"] == 3);
    CHECK(j["config"]["fewshot"]["way"] == 3);
    CHECK(j["config"]["fewshot"]["n_augment"] == 10);
    CHECK(j["config"]["seed"] == 1);
    auto many = common;
    many.insert(many.end(), {"--tasks", "6"});
    const Result m = invoke(many);
    REQUIRE(m.code == 0);
    CHECK(m.report()["ci95"].is_number());
    CHECK(invoke(many).out == m.out);
  }

  TEST_CASE("5-way 1-shot on separable embeddings") {
    TempDir dir;
    write_embeddings(feature_store(6, 20, 0), dir.file("base.ssle"));
    write_embeddings(feature_store(6, 20, 50), dir.file("novel.ssle"));
    const auto cfg = write_config(dir, "c.json", "{}", 5);
    const Result r = invoke({"fewshot", "--config", cfg, "--base-emb", dir.file("base.ssle"), "--novel-emb",
                             dir.file("novel.ssle"), "--way", "5", "--shot", "1", "--tasks", "100"});
    REQUIRE(r.code == 0);
    CHECK(r.report()["mean"].get<double>() > 0.9);
  }

  TEST_CASE("one default-size pretraining epoch fits the time budget") {
    TempDir dir;
    const auto cfg = write_config(dir, "c.json", R"({"distill": {"epochs": 1}})", 1);
    REQUIRE(invoke({"synth", "--config", cfg, "--out", dir.file("d.ssld")}).code == 0);
    const auto start = std::chrono::steady_clock::now();
    const Result p = invoke({"pretrain", "--config", cfg, "--data", dir.file("d.ssld"), "--out", dir.file("t.svtc")});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    REQUIRE(p.code == 0);
    CHECK(secs < 60.0);
    MESSAGE("1 epoch at default sizes took " << secs << " s");
  }

  TEST_CASE("end-to-end pipeline") {
    TempDir dir;
    const std::string cfg = write_config(dir, "c.json", kTinyConfig, 2);
    REQUIRE(invoke({"synth", "--config", cfg, "--out", dir.file("d.ssld")}).code == 0);
    const Result p = invoke({"pretrain", "--config", cfg, "--data", dir.file("d.ssld"), "--out", dir.file("t.svtc")});
    REQUIRE(p.code == 0);
    const Result p2 = invoke({"pretrain", "--config", cfg, "--data", dir.file("d.ssld"), "--out", dir.file("t2.svtc")});
    CHECK(p2.report()["hash"] == p.report()["hash"]);
    CHECK(p2.report()["final_loss"] == p.report()["final_loss"]);

    // the log's momentum schedule never decreases
    std::ifstream log_file(dir.file("t.svtc.log.json"));
    const json log = json::parse(log_file);
    REQUIRE(log["steps"].size() == 4);
    for (std::size_t i = 1; i < log["steps"].size(); ++i)
      CHECK(log["steps"][i]["lambda"].get<double>() >= log["steps"][i - 1]["lambda"].get<double>());

    const Result e = invoke({"embed", "--model", dir.file("t.svtc"), "--data", dir.file("d.ssld"), "--out",
                             dir.file("e.ssle")});
    REQUIRE(e.code == 0);
    const EmbeddingStore store = read_embeddings(dir.file("e.ssle"));
    CHECK(store.size() == 48);
    CHECK(store.dim == 8);
    // row 0 is the encoder output rounded to f32
    const ViTParams teacher = load_checkpoint(dir.file("t.svtc"));
    const Dataset data = read_dataset(dir.file("d.ssld"));
    const auto direct = encode(teacher, center_crop(data.images[0], teacher.config.image_size)).to_vector();
    for (std::size_t j = 0; j < direct.size(); ++j)
      CHECK(store.row(0)[j] == static_cast<double>(static_cast<float>(direct[j])));

    const Result untrained = invoke({"retrieval", "eval", "--config", cfg, "--model", dir.file("t.svtc"), "--data",
                                     dir.file("d.ssld")});
    REQUIRE(untrained.code == 0);
    CHECK(untrained.report()["head"] == "backbone");
    for (const char* k : {"recall@1", "recall@2", "recall@4", "recall@8"}) CHECK(untrained.report().contains(k));

    const Result bad_loss = invoke({"retrieval", "eval", "--config", cfg, "--model", dir.file("t.svtc"), "--data",
                                    dir.file("d.ssld"), "--loss", "triplet"});
    CHECK(bad_loss.code == cli::kExitUsage);
    CHECK(bad_loss.err.find("margin, proxy_nca, multi_similarity") != std::string::npos);

    const Result t = invoke({"retrieval", "train", "--config", cfg, "--model", dir.file("t.svtc"), "--data",
                             dir.file("d.ssld"), "--loss", "margin", "--out", dir.file("r.svtc")});
    REQUIRE(t.code == 0);
    const json tr = t.report();
    CHECK(tr["loss_kind"] == "margin");
    CHECK(tr["epochs"] == 1);
    for (const char* k : {"recall@1", "recall@2", "recall@4", "recall@8"}) {
      CHECK(tr.contains(k));
      CHECK(tr["initial"].contains(k));
    }
    CHECK(tr.contains("config"));

    const Result ev = invoke({"retrieval", "eval", "--config", cfg, "--model", dir.file("r.svtc"), "--data",
                              dir.file("d.ssld"), "--k", "1,2"});
    REQUIRE(ev.code == 0);
    CHECK(ev.report().contains("recall@2"));
    CHECK_FALSE(ev.report().contains("recall@4"));
    CHECK(ev.report()["head"] == "retrieval");

    const Result er = invoke({"embed", "--model", dir.file("r.svtc"), "--data", dir.file("d.ssld"), "--out",
                              dir.file("r.ssle"), "--retrieval-head"});
    REQUIRE(er.code == 0);
    CHECK(read_embeddings(dir.file("r.ssle")).dim == 4);
  }
}
