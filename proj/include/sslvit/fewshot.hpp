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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "sslvit/data.hpp"
#include "sslvit/image.hpp"
#include "sslvit/rng.hpp"
#include "sslvit/vit.hpp"

namespace sslvit {

using Feature = std::vector<double>;

/// Teacher backbone embedding of an image, used as-is (no power transform).
Feature extract_feature(const ViTParams& teacher, const Image& image);

struct ClassStatistics {
  ClassId class_id = 0;
  Feature mean;
  std::vector<double> covariance;  // dim x dim, row-major
  std::size_t count = 0;

  std::size_t dim() const { return mean.size(); }
  double cov(std::size_t i, std::size_t j) const { return covariance[i * dim() + j]; }
};

/// Per-class mean and unbiased (n - 1) covariance, ordered by class id.
/// Single-pass (Welford) accumulation; the upper triangle is computed and
/// mirrored so the result is exactly symmetric. Every class needs >= 2
/// samples of equal length.
std::vector<ClassStatistics> class_statistics(
    const std::map<ClassId, std::vector<Feature>>& features_by_class);

/// Groups store rows by label and calls class_statistics.
std::vector<ClassStatistics> class_statistics(const EmbeddingStore& store);

struct CalibratedDistribution {
  Feature mean;
  std::vector<double> covariance;  // dim x dim
  std::size_t source_support_index = 0;
  std::vector<ClassId> selected;   // base classes used, nearest first
};

/// Borrows statistics from the k base classes whose means are nearest to
/// `feature` (Euclidean, ties by ascending class id):
/// mean = (sum of their means + feature) / (k + 1),
/// cov  = (sum of their covariances) / k + alpha * I.
CalibratedDistribution calibrate(std::span<const double> feature,
                                 std::span<const ClassStatistics> base_stats, std::size_t k,
                                 double alpha, std::size_t source_support_index = 0);

/// n draws from N(mean, cov). Uses a Cholesky factor, falling back to an
/// eigendecomposition for semidefinite covariances. Throws DomainError when
/// the covariance has an eigenvalue below -1e-8 * (largest magnitude).
std::vector<Feature> sample_augmented(const CalibratedDistribution& dist, std::size_t n, Rng& rng);

struct LogisticOptions {
  double l2 = 1e-3;
  std::size_t max_iter = 5000;
  double grad_tol = 1e-6;
};

struct LogisticModel {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> weights;  // dim x num_classes
  std::vector<double> bias;     // num_classes
  std::size_t iterations = 0;
  bool converged = false;
  double final_grad_norm = 0.0;  // infinity norm

  std::vector<double> logits(std::span<const double> x) const;
  /// Arg-max class, lowest index on ties.
  std::size_t predict(std::span<const double> x) const;
};

/// Multinomial logistic regression on mean cross-entropy plus
/// 0.5 * l2 * ||W||^2 (bias unpenalized), solved by deterministic
/// full-batch accelerated gradient descent with step 1/L, L from the
/// data's Gram matrix. Stops when the gradient infinity norm drops below
/// grad_tol or after max_iter iterations. Labels are 0..C-1 with C >= 2.
LogisticModel fit_logistic(const std::vector<Feature>& features,
                           std::span<const std::size_t> labels, const LogisticOptions& options);

struct Episode {
  std::size_t way = 0;
  std::size_t shot = 0;
  std::size_t query_per_class = 0;
  std::vector<Feature> support;
  std::vector<std::size_t> support_labels;  // 0..way-1
  std::vector<Feature> query;
  std::vector<std::size_t> query_labels;
  std::vector<ClassId> classes;  // episode label -> source class
};

/// Draws `way` distinct classes having at least shot + query_per_class rows,
/// then disjoint support and query rows per class.
Episode sample_episode(const EmbeddingStore& novel, std::size_t way, std::size_t shot,
                       std::size_t query_per_class, Rng& rng);

struct FewShotConfig {
  std::size_t k = 2;
  double alpha = 0.21;
  std::size_t n_augment = 750;
  LogisticOptions logistic;
  std::size_t way = 5;
  std::size_t shot = 1;
  std::size_t query_per_class = 15;
  std::size_t tasks = 1000;
};

struct EpisodeOutcome {
  double accuracy = 0.0;
  std::vector<std::size_t> predictions;  // one per query
};

/// Calibrates every support feature, draws n_augment samples from each
/// calibrated distribution, fits logistic regression on support + samples
/// and scores the query set. With n_augment == 0 calibration is skipped.
EpisodeOutcome run_episode(const Episode& episode, std::span<const ClassStatistics> base_stats,
                           const FewShotConfig& config, Rng& rng);

struct FewShotSummary {
  double mean = 0.0;
  std::optional<double> ci95;  // absent for a single task
  std::vector<double> accuracies;
};

/// Mean and 1.96 * sample-std / sqrt(n) half-width; pairwise summation.
FewShotSummary summarize_accuracies(std::span<const double> accuracies);

using TaskSource = std::function<Episode(Rng& rng)>;

/// Task i receives Rng(derive_seed(master_seed, i)) for both sampling and
/// augmentation, so the summary does not depend on evaluation order or
/// thread count. Tasks run in parallel under OpenMP.
FewShotSummary evaluate_fewshot(const TaskSource& source, std::size_t num_tasks,
                                std::span<const ClassStatistics> base_stats,
                                const FewShotConfig& config, std::uint64_t master_seed);

}  // namespace sslvit
