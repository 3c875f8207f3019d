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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sslvit/data.hpp"
#include "sslvit/image.hpp"
#include "sslvit/rng.hpp"
#include "sslvit/tensor.hpp"
#include "sslvit/vit.hpp"

namespace sslvit {

enum class LossKind { kMargin, kProxyNca, kMultiSimilarity };

std::string_view loss_kind_name(LossKind kind);
std::optional<LossKind> parse_loss_kind(std::string_view name);
/// "margin, proxy_nca, multi_similarity"
std::string loss_kind_options();

enum class PairSampling { kAll, kDistanceWeighted };

struct RetrievalConfig {
  std::size_t embed_dim = 128;
  LossKind loss = LossKind::kMargin;
  std::size_t epochs = 5;
  std::size_t steps_per_epoch = 0;  // 0: ceil(train size / batch size)
  std::size_t classes_per_batch = 4;
  std::size_t samples_per_class = 4;
  double learning_rate = 0.003;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double proxy_lr = 0.1;
  double beta_lr = 0.01;
  double margin_alpha = 0.2;
  double margin_beta = 1.2;
  PairSampling sampling = PairSampling::kDistanceWeighted;
  double ms_alpha = 2.0;
  double ms_beta = 50.0;
  double ms_lambda = 1.0;
  double ms_epsilon = 0.1;
  double train_fraction = 0.5;

  std::size_t batch_size() const { return classes_per_batch * samples_per_class; }
  void validate() const;
};

/// Rows of a B x C embedding matrix with dense class labels 0..n-1.
struct EmbeddingBatch {
  Tensor embeddings;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
};

/// Backbone class token through the retrieval projection, unit norm.
Tensor embed_retrieval(const ViTParams& params, const Image& image);

enum class EmbedHead {
  kBackbone,            // raw class token
  kNormalizedBackbone,  // class token scaled to unit norm
  kRetrieval,           // retrieval projection, unit norm
};

/// Center-cropped embedding of every sample, in dataset order. Images are
/// processed in parallel; each row depends only on its own image.
EmbeddingStore embed_dataset(const ViTParams& params, const Dataset& dataset, EmbedHead head);

struct MarginPair {
  std::size_t anchor = 0;
  std::size_t other = 0;
  bool positive = false;
};

/// Every unordered pair i < j.
std::vector<MarginPair> all_pairs(std::span<const std::size_t> labels);

struct DistanceWeightedOptions {
  double cutoff = 0.5;
  double nonzero_loss_cutoff = 1.4;
};

/// For each anchor and each of its positives, emits the positive pair and one
/// negative drawn with probability proportional to 1/q(d), q being the
/// density of pairwise distances between uniform points on the unit sphere.
/// Distances are clamped below at `cutoff`; negatives at or beyond
/// `nonzero_loss_cutoff` get weight zero unless every negative does.
std::vector<MarginPair> distance_weighted_pairs(const Tensor& embeddings,
                                                std::span<const std::size_t> labels, Rng& rng,
                                                const DistanceWeightedOptions& options = {});

/// mean over active pairs of relu(alpha + y (D - beta[label(anchor)])),
/// y = +1 for positives and -1 for negatives, D Euclidean. The divisor is
/// the count of pairs with a positive hinge (at least 1).
Tensor margin_loss(const EmbeddingBatch& batch, const Tensor& beta, double alpha,
                   std::span<const MarginPair> pairs);

/// Proxies are normalized inside the loss. With D the squared distance,
/// loss = mean_k [D(e_k, p_y) + log sum_{z != y} exp(-D(e_k, p_z))].
Tensor proxy_nca_loss(const EmbeddingBatch& batch, const Tensor& proxies);

struct MultiSimilarityOptions {
  double alpha = 2.0;
  double beta = 50.0;
  double lambda = 1.0;
  double epsilon = 0.1;
};

/// Cosine similarities S = E E^T. For anchor i, negatives are kept when
/// S > min positive - epsilon and positives when S < max negative + epsilon;
/// an empty opposite set keeps everything. Anchors with no kept pair are
/// skipped; the loss is the mean over the rest, 0 when none remain.
Tensor multi_similarity_loss(const EmbeddingBatch& batch, const MultiSimilarityOptions& options);

/// Fraction of queries with a same-label item among the k nearest gallery
/// rows (squared Euclidean, ties by ascending index). With same_set the
/// query is excluded from its own neighbor list.
double recall_at_k(const EmbeddingStore& queries, const EmbeddingStore& gallery, std::size_t k,
                   bool same_set);

/// recall_at_k for several k values sharing one distance computation.
std::vector<double> recall_at_ks(const EmbeddingStore& queries, const EmbeddingStore& gallery,
                                 std::span<const std::size_t> ks, bool same_set);

namespace serial {
double recall_at_k(const EmbeddingStore& queries, const EmbeddingStore& gallery, std::size_t k,
                   bool same_set);
}  // namespace serial

struct FinetuneStep {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
};

struct RetrievalModel {
  ViTParams params;                 // backbone plus retrieval projection
  Tensor proxies;                   // [classes, embed_dim], proxy_nca only
  Tensor beta;                      // [classes], margin only
  std::vector<ClassId> train_classes;
  std::vector<FinetuneStep> steps;
};

/// Copies the teacher, attaches a fresh retrieval projection and trains on
/// class-balanced batches (classes_per_batch x samples_per_class) of
/// center crops with SGD. Deterministic given the seed.
RetrievalModel finetune(const ViTParams& teacher, const Dataset& train,
                        const RetrievalConfig& config, std::uint64_t seed);

}  // namespace sslvit
