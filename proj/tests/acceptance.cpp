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

// Acceptance checks. Each criterion prints one PASS or FAIL line with the
// measured quantity next to its threshold. An optional argument restricts
// the run to criteria whose name contains it.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "commands.hpp"
#include "sslvit/data.hpp"
#include "sslvit/distill.hpp"
#include "sslvit/fewshot.hpp"
#include "sslvit/retrieval.hpp"
#include "sslvit/serialize.hpp"
#include "support/fixtures.hpp"
#include "support/gradient.hpp"
#include "support/oracles.hpp"
#include "support/task_family.hpp"

using namespace sslvit;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

oracle::Mat rows_of(const Tensor& t) {
  oracle::Mat m(t.dim(0), oracle::Vec(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t.data()[i * t.dim(1) + j];
  return m;
}

DistillConfig micro_distill() {
  DistillConfig c;
  c.num_local_views = 2;
  c.global_size = 8;
  c.local_size = 4;
  c.tau_s = 0.5;
  c.tau_t = 0.2;
  return c;
}

std::vector<std::size_t> balanced_labels(std::size_t classes, std::size_t per_class) {
  std::vector<std::size_t> y;
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i) y.push_back(c);
  return y;
}

// ---------------------------------------------------------------------------

Outcome gradient_integrity() {
  const auto start = std::chrono::steady_clock::now();
  double worst_distill = 0.0, worst_metric = 0.0;
  const auto y = balanced_labels(4, 2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + seed);
    const DistillConfig c = micro_distill();
    DistillState s = DistillState::init(support::micro_vit(), c, rng);
    support::spread_parameters(s.student, rng, 0.3);
    support::spread_parameters(s.teacher, rng, 0.3);
    s.center = std::vector<double>(8);
    for (double& v : s.center) v = 0.1 * rng.normal();
    const auto views = multi_crop(support::random_image_u8(1, 8, rng), c, rng);
    worst_distill = std::max(
        worst_distill,
        support::gradient_error([&] { return distillation_loss(s, views, c); }, s.student.parameters()));

    Tensor raw = support::random_tensor({8, 6}, rng);
    Tensor beta = support::random_tensor({4}, rng, true, 0.9, 1.3);
    Tensor proxies = support::random_tensor({4, 6}, rng);
    const auto pairs = all_pairs(y);
    worst_metric = std::max(
        {worst_metric,
         support::gradient_error([&] { return margin_loss({l2_normalize(raw), y}, beta, 0.2, pairs); },
                                 {raw, beta}),
         support::gradient_error([&] { return proxy_nca_loss({l2_normalize(raw), y}, proxies); },
                                 {raw, proxies}),
         support::gradient_error([&] { return multi_similarity_loss({l2_normalize(raw), y}, {}); }, {raw})});
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst_distill < 1e-4 && worst_metric < 1e-4 && secs < 120.0,
          "max rel err distill " + fmt("%.2e", worst_distill) + ", metric " + fmt("%.2e", worst_metric) +
              " (< 1e-4), 20 seeds in " + fmt("%.1f", secs) + " s (< 120)"};
}

Outcome loss_oracles() {
  double worst[4] = {0, 0, 0, 0};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(2000 + seed);
    ViTConfig vc = support::micro_vit();
    DistillConfig c = micro_distill();
    c.num_local_views = 6;  // 8 views
    c.tau_s = 0.1;
    c.tau_t = 0.04;
    DistillState s = DistillState::init(vc, c, rng);
    support::spread_parameters(s.student, rng, 0.3);
    support::spread_parameters(s.teacher, rng, 0.3);
    s.center = std::vector<double>(vc.out_dim);
    for (double& v : s.center) v = 0.1 * rng.normal();
    const auto views = multi_crop(support::random_image_u8(1, 8, rng), c, rng);
    oracle::Mat teacher, student;
    for (std::size_t g = 0; g < 2; ++g) teacher.push_back(head(s.teacher, encode(s.teacher, views[g])).to_vector());
    for (const auto& v : views) student.push_back(head(s.student, encode(s.student, v)).to_vector());
    worst[0] = std::max(worst[0], std::abs(distillation_loss(s, views, c).item() -
                                           oracle::distillation_loss(teacher, student, c.tau_s, c.tau_t, s.center)));

    const auto y = balanced_labels(4, 2);
    const Tensor e = l2_normalize(support::random_tensor({8, 5}, rng, false));
    const Tensor beta = support::random_tensor({4}, rng, false, 0.8, 1.4);
    const auto pairs = seed % 2 ? all_pairs(y) : distance_weighted_pairs(e, y, rng);
    std::vector<oracle::Pair> op;
    for (const auto& p : pairs) op.push_back({p.anchor, p.other, p.positive});
    worst[1] = std::max(worst[1], std::abs(margin_loss({e, y}, beta, 0.2, pairs).item() -
                                           oracle::margin_loss(rows_of(e), y, beta.to_vector(), 0.2, op)));
    const Tensor proxies = support::random_tensor({4, 5}, rng, false, -2, 2);
    worst[2] = std::max(worst[2], std::abs(proxy_nca_loss({e, y}, proxies).item() -
                                           oracle::proxy_nca_loss(rows_of(e), y, rows_of(proxies))));
    worst[3] = std::max(worst[3], std::abs(multi_similarity_loss({e, y}, {}).item() -
                                           oracle::multi_similarity_loss(rows_of(e), y, 2.0, 50.0, 1.0, 0.1)));
  }
  const bool pass = *std::max_element(worst, worst + 4) <= 1e-12;
  return {pass, "max abs diff distill " + fmt("%.1e", worst[0]) + ", margin " + fmt("%.1e", worst[1]) +
                    ", proxy_nca " + fmt("%.1e", worst[2]) + ", multi_similarity " + fmt("%.1e", worst[3]) +
                    " (<= 1e-12, batch 8)"};
}

Outcome class_statistics_check() {
  Rng rng(3000);
  double worst_diff = 0.0, worst_eig = 0.0;
  bool symmetric = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + rng.uniform_index(8), n = 2 + rng.uniform_index(60);
    const double scale = std::exp(2.3 * (2.0 * rng.uniform() - 1.0));  // 0.1 to 10
    oracle::Mat samples(n, oracle::Vec(d));
    for (auto& x : samples)
      for (double& v : x) v = scale * (rng.normal() + 3.0);
    const auto stats = class_statistics(std::map<ClassId, std::vector<Feature>>{{0, samples}});
    const auto ref = oracle::two_pass_moments(samples);
    const auto& s = stats[0];
    Eigen::MatrixXd cov(d, d);
    for (std::size_t i = 0; i < d; ++i) {
      worst_diff = std::max(worst_diff, std::abs(s.mean[i] - ref.mean[i]));
      for (std::size_t j = 0; j < d; ++j) {
        worst_diff = std::max(worst_diff, std::abs(s.cov(i, j) - ref.cov[i][j]));
        symmetric = symmetric && s.cov(i, j) == s.cov(j, i);
        cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s.cov(i, j);
      }
    }
    const auto eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov).eigenvalues();
    worst_eig = std::min(worst_eig, eig.minCoeff() / std::max(1.0, eig.maxCoeff()));
  }
  return {worst_diff <= 1e-10 && symmetric && worst_eig >= -1e-12,
          "max abs diff vs two-pass " + fmt("%.1e", worst_diff) + " (<= 1e-10), exactly symmetric " +
              (symmetric ? "yes" : "no") + ", min eig / max eig " + fmt("%.1e", worst_eig) +
              " (>= -1e-12), 1000 inputs"};
}

Outcome sampling_oracle() {
  const std::size_t d = 4;
  CalibratedDistribution dist;
  dist.mean = {1.0, -0.5, 2.0, 0.25};
  dist.covariance = {2.0, 0.3, 0.0, 0.1, 0.3, 1.0, -0.2, 0.0, 0.0, -0.2, 0.5, 0.05, 0.1, 0.0, 0.05, 0.8};
  Rng rng(4000);
  const auto samples = sample_augmented(dist, 100000, rng);
  const auto m = oracle::two_pass_moments(samples);
  double mean_err = 0.0, diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    mean_err = std::max(mean_err, std::abs(m.mean[i] - dist.mean[i]));
    for (std::size_t j = 0; j < d; ++j) {
      diff += std::pow(m.cov[i][j] - dist.covariance[i * d + j], 2);
      ref += std::pow(dist.covariance[i * d + j], 2);
    }
  }
  const double rel = std::sqrt(diff / ref);
  return {mean_err < 0.02 && rel < 0.05, "mean inf-norm err " + fmt("%.4f", mean_err) +
                                             " (< 0.02), cov rel Frobenius err " + fmt("%.4f", rel) +
                                             " (< 0.05), 100000 draws"};
}

Outcome calibration_efficacy() {
  const auto start = std::chrono::steady_clock::now();
  // Groups sit close enough that one support image per class leaves the
  // uncalibrated classifier well short of perfect.
  family::Options fo;
  fo.center_scale = 0.5;
  const auto fam = family::make(fo, 5000);
  const auto stats = class_statistics(fam.base);
  const TaskSource source = [&](Rng& rng) { return sample_episode(fam.novel, 5, 1, 15, rng); };
  FewShotConfig calibrated;
  calibrated.k = 2;
  calibrated.alpha = 0.21;
  calibrated.n_augment = 750;
  FewShotConfig baseline = calibrated;
  baseline.n_augment = 0;
  const auto with = evaluate_fewshot(source, 1000, stats, calibrated, 5001);
  const auto without = evaluate_fewshot(source, 1000, stats, baseline, 5001);
  const double gain = 100.0 * (with.mean - without.mean);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {gain >= 3.0 && secs < 600.0,
          "5-way 1-shot over 1000 tasks: calibrated " + fmt("%.2f", 100.0 * with.mean) + "% vs baseline " +
              fmt("%.2f", 100.0 * without.mean) + "%, gain " + fmt("%.2f", gain) + " points (>= 3) in " +
              fmt("%.0f", secs) + " s (< 600)"};
}

SynthOptions four_class_data() {
  SynthOptions o;
  o.num_classes = 4;
  o.per_class = 16;
  o.image_size = 16;
  o.channels = 3;
  o.seed = 6000;
  return o;
}

ViTConfig small_vit() {
  ViTConfig v;
  v.image_size = 16;
  v.patch_size = 4;
  v.channels = 3;
  v.depth = 2;
  v.heads = 2;
  v.dim = 32;
  v.mlp_ratio = 2.0;
  v.out_dim = 32;
  return v;
}

DistillConfig small_distill(std::size_t epochs, std::size_t steps_per_epoch) {
  DistillConfig c;
  c.global_size = 16;
  c.local_size = 8;
  c.num_local_views = 2;
  c.epochs = epochs;
  c.steps_per_epoch = steps_per_epoch;
  c.batch_size = 4;
  c.probe_every = 10;
  c.probe_size = 16;
  return c;
}

Outcome training_progress() {
  const Dataset data = synth_dataset(four_class_data());
  const ViTConfig vit = small_vit();
  const DistillConfig c = small_distill(10, 20);
  const PretrainResult r = pretrain(data, vit, c, 6001);
  const std::size_t n = r.steps.size(), q = n / 5;
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < q; ++i) {
    first += r.steps[i].loss / static_cast<double>(q);
    last += r.steps[n - q + i].loss / static_cast<double>(q);
  }
  double min_entropy = std::numeric_limits<double>::infinity();
  for (const auto& p : r.probes) min_entropy = std::min(min_entropy, p.entropy);
  const double floor = 0.5 * std::log(static_cast<double>(vit.out_dim));
  return {n == 200 && last < first && min_entropy > floor && c.centering_enabled,
          std::to_string(n) + " steps: step-0 loss " + fmt("%.4f", r.steps.front().loss) +
              ", first-quintile mean " + fmt("%.4f", first) + ", last-quintile mean " +
              fmt("%.4f", last) + "; min teacher entropy " + fmt("%.3f", min_entropy) + " over " +
              std::to_string(r.probes.size()) + " probes (> 0.5 ln K = " + fmt("%.3f", floor) + ")"};
}

EmbeddingStore rotate(const EmbeddingStore& s, Rng& rng) {
  const auto d = static_cast<Eigen::Index>(s.dim);
  Eigen::MatrixXd m(d, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  const Eigen::MatrixXd rot = Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ();
  EmbeddingStore r = s;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Eigen::Map<const Eigen::VectorXd> x(s.row(i).data(), d);
    Eigen::Map<Eigen::VectorXd>(r.values.data() + i * s.dim, d) = rot * x;
  }
  return r;
}

Outcome retrieval_end_to_end() {
  SynthOptions o = four_class_data();
  o.num_classes = 8;
  o.per_class = 40;
  o.noise_std = 150.0;
  o.seed = 7000;
  const Dataset data = synth_dataset(o);
  const double half[] = {0.5, 0.5};
  const auto parts = split_classes(data, half);
  const PretrainResult pre = pretrain(parts[0], small_vit(), small_distill(4, 20), 7001);
  const ViTParams& teacher = pre.state.teacher;

  bool improves = true, monotone = true, invariant = true;
  std::string detail = "Recall@1 init -> trained:";
  const std::vector<std::size_t> ks{1, 2, 4, 8};
  Rng rot_rng(7002);
  for (auto kind : {LossKind::kMargin, LossKind::kProxyNca, LossKind::kMultiSimilarity}) {
    RetrievalConfig c;
    c.loss = kind;
    c.embed_dim = 32;
    c.epochs = 2;
    c.steps_per_epoch = 20;
    RetrievalConfig init = c;
    init.epochs = 0;
    const auto before = embed_dataset(finetune(teacher, parts[0], init, 7003).params, parts[1], EmbedHead::kRetrieval);
    const auto after = embed_dataset(finetune(teacher, parts[0], c, 7003).params, parts[1], EmbedHead::kRetrieval);
    const auto rb = recall_at_ks(before, before, ks, true);
    const auto ra = recall_at_ks(after, after, ks, true);
    improves = improves && ra[0] > rb[0];
    for (const auto& r : {rb, ra})
      for (std::size_t i = 1; i < r.size(); ++i) monotone = monotone && r[i] >= r[i - 1];
    const auto rotated = rotate(after, rot_rng);
    invariant = invariant && recall_at_ks(rotated, rotated, ks, true) == ra;
    detail += " " + std::string(loss_kind_name(kind)) + " " + fmt("%.3f", rb[0]) + " -> " + fmt("%.3f", ra[0]);
  }
  detail += std::string("; monotone in K ") + (monotone ? "yes" : "no") + "; rotation invariant " +
            (invariant ? "yes" : "no");
  return {improves && monotone && invariant, detail};
}

Outcome schedules_and_ema() {
  bool endpoints = true;
  for (double base : {0.9, 0.99, 0.996, 0.9995}) {
    for (std::size_t total : {1u, 7u, 200u, 100000u}) {
      endpoints = endpoints && cosine_lambda(0, total, base) == base && cosine_lambda(total, total, base) == 1.0;
    }
  }
  // Dyadic values keep every product and sum exact in binary floating point,
  // so the contraction identity can be checked with ==.
  bool exact = true;
  Rng rng(8000);
  const DistillConfig c = micro_distill();
  for (double lambda : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    DistillState s = DistillState::init(support::micro_vit(), c, rng);
    for (auto* p : {&s.student, &s.teacher})
      for (auto& t : p->parameters())
        for (double& v : t.mutable_data()) v = static_cast<double>(static_cast<int>(rng.uniform_index(2049)) - 1024) / 1024.0;
    std::vector<std::vector<double>> old;
    for (const auto& t : s.teacher.parameters()) old.push_back(t.to_vector());
    ema_update(s, lambda);
    const auto teacher = s.teacher.parameters(), student = s.student.parameters();
    for (std::size_t k = 0; k < teacher.size(); ++k)
      for (std::size_t i = 0; i < teacher[k].numel(); ++i)
        exact = exact && std::abs(teacher[k].data()[i] - student[k].data()[i]) ==
                             lambda * std::abs(old[k][i] - student[k].data()[i]);
  }
  return {endpoints && exact, std::string("cosine endpoints exact ") + (endpoints ? "yes" : "no") +
                                  "; EMA contraction exact per element " + (exact ? "yes" : "no")};
}

// Episodes whose accuracy is fixed in advance: two 1-D classes at -1 and +1,
// every query placed at +1 and labeled 1 when it should count as correct.
Outcome ci_arithmetic() {
  const std::uint64_t master = 9000;
  const std::size_t queries = 40;
  Rng rng(9001);
  std::vector<std::vector<double>> lists{{1.0, 1.0, 1.0}, {0.8, 0.6}, {0.5}, {}};
  for (std::size_t i = 0; i < 1000; ++i)
    lists.back().push_back(static_cast<double>(rng.uniform_index(queries + 1)) / static_cast<double>(queries));
  double worst = 0.0;
  bool null_single = true;
  for (const auto& accs : lists) {
    std::map<std::uint64_t, std::size_t> task_of;
    for (std::size_t i = 0; i < accs.size(); ++i) task_of[Rng(derive_seed(master, i)).next_u64()] = i;
    const TaskSource source = [&](Rng& r) {
      const double a = accs[task_of.at(r.next_u64())];
      const auto correct = static_cast<std::size_t>(std::lround(a * static_cast<double>(queries)));
      Episode e;
      e.way = 2;
      e.shot = 1;
      e.query_per_class = queries / 2;
      e.support = {{-1.0}, {1.0}};
      e.support_labels = {0, 1};
      for (std::size_t q = 0; q < queries; ++q) {
        e.query.push_back({1.0});
        e.query_labels.push_back(q < correct ? 1 : 0);
      }
      return e;
    };
    FewShotConfig cfg;
    cfg.n_augment = 0;
    const auto summary = evaluate_fewshot(source, accs.size(), {}, cfg, master);
    const double n = static_cast<double>(accs.size());
    double mean = 0.0;
    for (double a : accs) mean += a;
    mean /= n;
    worst = std::max(worst, std::abs(summary.mean - mean));
    if (accs.size() < 2) {
      null_single = null_single && !summary.ci95.has_value();
      continue;
    }
    double ss = 0.0;
    for (double a : accs) ss += (a - mean) * (a - mean);
    const double expected = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    worst = summary.ci95 ? std::max(worst, std::abs(*summary.ci95 - expected)) : 1.0;
  }
  return {worst <= 1e-12 && null_single, "max abs diff of mean and 1.96 sigma / sqrt(n) " + fmt("%.1e", worst) +
                                             " (<= 1e-12) over lists of 1, 2, 3, 1000 tasks; single task null " +
                                             (null_single ? "yes" : "no")};
}

struct CliRun {
  int code;
  std::string out;
};

CliRun cli_run(std::vector<std::string> args) {
  args.insert(args.begin(), "sslvit");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str()};
}

std::uint64_t hash_file(const std::filesystem::path& p) { return fnv1a64(read_file(p)); }

std::uint64_t hash_text(const std::string& s) {
  return fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

Outcome cli_determinism() {
  const auto root = std::filesystem::temp_directory_path() / "sslvit_acceptance_cli";
  std::filesystem::remove_all(root);
  std::filesystem::create_directories(root);
  std::ofstream(root / "config.json") << R"({
    "seed": 11,
    "data": {"num_classes": 6, "per_class": 10, "image_size": 12, "channels": 1},
    "vit": {"image_size": 8, "patch_size": 4, "channels": 1, "depth": 1, "heads": 2, "dim": 8,
            "mlp_ratio": 2.0, "out_dim": 8},
    "distill": {"global_size": 8, "local_size": 4, "num_local_views": 2, "epochs": 2,
                "steps_per_epoch": 3, "batch_size": 4, "probe_every": 2, "probe_size": 4},
    "fewshot": {"n_augment": 20, "way": 3, "shot": 1, "query_per_class": 3, "tasks": 8},
    "retrieval": {"embed_dim": 4, "epochs": 1, "steps_per_epoch": 3, "classes_per_batch": 2,
                  "samples_per_class": 2}
  })";
  const std::string cfg = (root / "config.json").string();
  // Each run writes into its own directory; a run's fingerprint is the hash
  // of every output file plus the stdout report with paths removed.
  auto pipeline = [&](const std::string& tag, const std::string& threads) {
    const auto dir = root / tag;
    std::filesystem::create_directories(dir);
    auto f = [&](const char* name) { return (dir / name).string(); };
    std::vector<std::pair<std::string, std::uint64_t>> h;
    bool ok = true;
    auto step = [&](const std::string& name, std::vector<std::string> args, std::vector<std::string> files) {
      args.insert(args.begin(), {"--threads", threads});
      const CliRun r = cli_run(args);
      ok = ok && r.code == 0;
      std::string report = r.out;
      for (std::size_t pos; (pos = report.find(dir.string())) != std::string::npos;)
        report.erase(pos, dir.string().size());
      h.emplace_back(name + " report", hash_text(report));
      for (const auto& file : files) h.emplace_back(name + " " + std::filesystem::path(file).filename().string(), hash_file(file));
    };
    step("synth", {"synth", "--config", cfg, "--out", f("data.ssld")}, {f("data.ssld")});
    step("pretrain", {"pretrain", "--config", cfg, "--data", f("data.ssld"), "--out", f("teacher.svtc")},
         {f("teacher.svtc"), f("teacher.svtc.log.json")});
    step("embed", {"embed", "--model", f("teacher.svtc"), "--data", f("data.ssld"), "--out", f("all.ssle")},
         {f("all.ssle")});
    step("fewshot", {"fewshot", "--config", cfg, "--base-emb", f("all.ssle"), "--novel-emb", f("all.ssle")}, {});
    step("retrieval train", {"retrieval", "train", "--config", cfg, "--model", f("teacher.svtc"), "--data",
                             f("data.ssld"), "--loss", "margin", "--out", f("tuned.svtc")},
         {f("tuned.svtc")});
    step("retrieval eval", {"retrieval", "eval", "--config", cfg, "--model", f("tuned.svtc"), "--data",
                            f("data.ssld")},
         {});
    return std::make_pair(ok, h);
  };
  const auto a = pipeline("a", "1"), b = pipeline("b", "1"), c = pipeline("c", "3");
  std::filesystem::remove_all(root);
  std::string mismatched;
  for (std::size_t i = 0; i < a.second.size(); ++i)
    if (a.second[i] != b.second[i] || a.second[i] != c.second[i]) mismatched += " " + a.second[i].first;
  const bool pass = a.first && b.first && c.first && mismatched.empty();
  return {pass, std::to_string(a.second.size()) + " outputs of synth, pretrain, embed, fewshot, retrieval train, "
                    "retrieval eval identical across reruns (1, 1, 3 threads)" +
                    (mismatched.empty() ? "" : "; mismatched:" + mismatched) + (a.first && b.first && c.first ? "" : "; a command failed")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string filter = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient-integrity", gradient_integrity},
      {"loss-oracles", loss_oracles},
      {"class-statistics", class_statistics_check},
      {"sampling-oracle", sampling_oracle},
      {"calibration-efficacy", calibration_efficacy},
      {"training-progress", training_progress},
      {"retrieval-end-to-end", retrieval_end_to_end},
      {"schedules-and-ema", schedules_and_ema},
      {"ci-arithmetic", ci_arithmetic},
      {"cli-determinism", cli_determinism},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    if (name.find(filter) == std::string::npos) continue;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
