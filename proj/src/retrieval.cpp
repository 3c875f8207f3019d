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

#include "sslvit/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <numeric>

#include "sslvit/distill.hpp"
#include "sslvit/errors.hpp"
#include "sslvit/kernels.hpp"

namespace sslvit {
namespace {

constexpr std::string_view kLossNames[] = {"margin", "proxy_nca", "multi_similarity"};

// Picks single elements of a 1-D tensor, keeping the graph.
Tensor gather_elements(const Tensor& v, std::span<const std::size_t> index) {
  const Tensor column = reshape(v, {v.numel(), 1});
  return reshape(gather_rows(column, index), {index.size()});
}

void check_batch(const EmbeddingBatch& batch, const char* who) {
  if (batch.embeddings.rank() != 2 || batch.embeddings.dim(0) != batch.labels.size())
    throw ShapeError(std::string(who) + ": embeddings " + shape_str(batch.embeddings.shape()) +
                     " do not match " + std::to_string(batch.labels.size()) + " labels");
  if (batch.labels.empty()) throw InvalidArgument(std::string(who) + ": empty batch");
}

std::vector<double> recall_impl(const EmbeddingStore& queries, const EmbeddingStore& gallery,
                                std::span<const std::size_t> ks, bool same_set, bool parallel) {
  if (queries.dim != gallery.dim) throw ShapeError("recall_at_k: query and gallery dims differ");
  if (same_set && queries.size() != gallery.size())
    throw InvalidArgument("recall_at_k: same_set requires equal query and gallery sizes");
  if (queries.size() == 0) throw InvalidArgument("recall_at_k: no queries");
  const std::size_t usable = gallery.size() - (same_set ? 1 : 0);
  for (std::size_t k : ks) {
    if (k == 0) throw InvalidArgument("recall_at_k: k must be at least 1");
    if (k > usable)
      throw InvalidArgument("recall_at_k: k = " + std::to_string(k) + " exceeds usable gallery size " +
                            std::to_string(usable));
  }
  const std::size_t m = queries.size(), n = gallery.size();
  std::vector<double> dist(m * n);
  std::vector<std::uint8_t> hits(m);
  if (parallel) {
    kernels::pairwise_sq_dist(m, n, queries.dim, queries.values, gallery.values, dist);
  } else {
    kernels::serial::pairwise_sq_dist(m, n, queries.dim, queries.values, gallery.values, dist);
  }
  std::vector<double> out;
  for (std::size_t k : ks) {
    if (parallel) {
      kernels::knn_label_hits(m, n, dist, queries.labels, gallery.labels, k, same_set, hits);
    } else {
      kernels::serial::knn_label_hits(m, n, dist, queries.labels, gallery.labels, k, same_set, hits);
    }
    const auto count = std::count(hits.begin(), hits.end(), std::uint8_t{1});
    out.push_back(static_cast<double>(count) / static_cast<double>(m));
  }
  return out;
}

}  // namespace

std::string_view loss_kind_name(LossKind kind) { return kLossNames[static_cast<int>(kind)]; }

std::optional<LossKind> parse_loss_kind(std::string_view name) {
  for (int i = 0; i < 3; ++i)
    if (kLossNames[i] == name) return static_cast<LossKind>(i);
  return std::nullopt;
}

std::string loss_kind_options() { return "margin, proxy_nca, multi_similarity"; }

void RetrievalConfig::validate() const {
  if (embed_dim == 0) throw ConfigError("retrieval.embed_dim must be positive");
  if (classes_per_batch < 2) throw ConfigError("retrieval.classes_per_batch must be at least 2");
  if (samples_per_class < 2) throw ConfigError("retrieval.samples_per_class must be at least 2");
  if (!(learning_rate >= 0.0) || !(proxy_lr >= 0.0) || !(beta_lr >= 0.0))
    throw ConfigError("retrieval learning rates must be nonnegative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("retrieval.momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("retrieval.weight_decay must be nonnegative");
  if (!(ms_alpha > 0.0) || !(ms_beta > 0.0)) throw ConfigError("retrieval.ms_alpha and ms_beta must be positive");
  if (!(ms_epsilon >= 0.0)) throw ConfigError("retrieval.ms_epsilon must be nonnegative");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("retrieval.train_fraction must be in (0, 1)");
}

Tensor embed_retrieval(const ViTParams& params, const Image& image) {
  if (!params.retrieval) throw InvalidArgument("embed_retrieval: model has no retrieval projection");
  const std::size_t dim = params.config.dim;
  const Tensor row = reshape(encode(params, image), {1, dim});
  const Tensor projected = params.retrieval->forward(row);
  return l2_normalize(reshape(projected, {projected.numel()}));
}

EmbeddingStore embed_dataset(const ViTParams& params, const Dataset& dataset, EmbedHead head) {
  if (head == EmbedHead::kRetrieval && !params.retrieval)
    throw InvalidArgument("embed_dataset: model has no retrieval projection");
  EmbeddingStore store;
  store.dim = head == EmbedHead::kRetrieval ? params.retrieval->bias.numel() : params.config.dim;
  store.values.assign(dataset.size() * store.dim, 0.0);
  store.labels.resize(dataset.size());
  const std::size_t size = params.config.image_size;
  const auto count = static_cast<std::ptrdiff_t>(dataset.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      NoGradGuard no_grad;
      const auto idx = static_cast<std::size_t>(i);
      const Image view = center_crop(dataset.images[idx], size);
      Tensor e;
      switch (head) {
        case EmbedHead::kBackbone: e = encode(params, view); break;
        case EmbedHead::kNormalizedBackbone: e = l2_normalize(encode(params, view)); break;
        case EmbedHead::kRetrieval: e = embed_retrieval(params, view); break;
      }
      std::copy(e.data().begin(), e.data().end(), store.values.begin() + static_cast<std::ptrdiff_t>(idx * store.dim));
      store.labels[idx] = dataset.records[idx].class_id;
    } catch (...) {
#pragma omp critical(sslvit_embed_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return store;
}

std::vector<MarginPair> all_pairs(std::span<const std::size_t> labels) {
  std::vector<MarginPair> pairs;
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = i + 1; j < labels.size(); ++j) pairs.push_back({i, j, labels[i] == labels[j]});
  return pairs;
}

std::vector<MarginPair> distance_weighted_pairs(const Tensor& embeddings,
                                                std::span<const std::size_t> labels, Rng& rng,
                                                const DistanceWeightedOptions& options) {
  if (embeddings.rank() != 2 || embeddings.dim(0) != labels.size())
    throw ShapeError("distance_weighted_pairs: embeddings " + shape_str(embeddings.shape()) +
                     " do not match " + std::to_string(labels.size()) + " labels");
  const std::size_t b = labels.size();
  const std::size_t c = embeddings.dim(1);
  const double n = static_cast<double>(c);
  std::vector<double> dist(b * b);
  kernels::serial::pairwise_sq_dist(b, b, c, embeddings.data(), embeddings.data(), dist);
  for (double& d : dist) d = std::sqrt(std::max(d, 0.0));

  std::vector<MarginPair> pairs;
  std::vector<std::size_t> negatives;
  std::vector<double> weights;
  for (std::size_t i = 0; i < b; ++i) {
    negatives.clear();
    for (std::size_t k = 0; k < b; ++k)
      if (labels[k] != labels[i]) negatives.push_back(k);
    if (negatives.empty()) continue;
    weights.assign(negatives.size(), 0.0);
    double max_log = -std::numeric_limits<double>::infinity();
    std::vector<double> log_w(negatives.size(), 0.0);
    bool any = false;
    for (std::size_t t = 0; t < negatives.size(); ++t) {
      const double raw = dist[i * b + negatives[t]];
      if (raw >= options.nonzero_loss_cutoff) continue;
      const double d = std::max(raw, options.cutoff);
      const double inner = std::max(1.0 - 0.25 * d * d, 1e-8);
      log_w[t] = (2.0 - n) * std::log(d) - 0.5 * (n - 3.0) * std::log(inner);
      max_log = std::max(max_log, log_w[t]);
      any = true;
    }
    double total = 0.0;
    for (std::size_t t = 0; t < negatives.size(); ++t) {
      if (any) {
        if (dist[i * b + negatives[t]] < options.nonzero_loss_cutoff) weights[t] = std::exp(log_w[t] - max_log);
      } else {
        weights[t] = 1.0;
      }
      total += weights[t];
    }
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i || labels[j] != labels[i]) continue;
      pairs.push_back({i, j, true});
      double u = rng.uniform() * total;
      std::size_t pick = negatives.size() - 1;
      for (std::size_t t = 0; t < negatives.size(); ++t) {
        if (weights[t] == 0.0) continue;
        if (u < weights[t]) {
          pick = t;
          break;
        }
        u -= weights[t];
        pick = t;
      }
      pairs.push_back({i, negatives[pick], false});
    }
  }
  return pairs;
}

Tensor margin_loss(const EmbeddingBatch& batch, const Tensor& beta, double alpha,
                   std::span<const MarginPair> pairs) {
  check_batch(batch, "margin_loss");
  const auto& labels = batch.labels;
  if (std::all_of(labels.begin(), labels.end(), [&](std::size_t l) { return l == labels[0]; }))
    throw InvalidArgument("margin_loss: batch holds a single class, no negative pairs");
  if (pairs.empty()) throw InvalidArgument("margin_loss: no pairs");
  const std::size_t max_label = *std::max_element(labels.begin(), labels.end());
  if (beta.rank() != 1 || beta.numel() <= max_label)
    throw ShapeError("margin_loss: beta " + shape_str(beta.shape()) + " does not cover label " +
                     std::to_string(max_label));
  std::vector<std::size_t> anchors, others, slots;
  std::vector<double> sign;
  for (const auto& p : pairs) {
    if (p.anchor >= labels.size() || p.other >= labels.size())
      throw InvalidArgument("margin_loss: pair index out of range");
    anchors.push_back(p.anchor);
    others.push_back(p.other);
    slots.push_back(labels[p.anchor]);
    sign.push_back(p.positive ? 1.0 : -1.0);
  }
  const Tensor diff = gather_rows(batch.embeddings, anchors) - gather_rows(batch.embeddings, others);
  const Tensor d = sqrt(sum(diff * diff, 1));
  const Tensor y = Tensor::from_data({sign.size()}, sign);
  const Tensor terms = relu(add_scalar(y * (d - gather_elements(beta, slots)), alpha));
  const auto values = terms.data();
  const auto active = std::count_if(values.begin(), values.end(), [](double v) { return v > 0.0; });
  return sum(terms) * (1.0 / static_cast<double>(std::max<std::ptrdiff_t>(1, active)));
}

Tensor proxy_nca_loss(const EmbeddingBatch& batch, const Tensor& proxies) {
  check_batch(batch, "proxy_nca_loss");
  if (proxies.rank() != 2 || proxies.dim(0) < 2)
    throw InvalidArgument("proxy_nca_loss: need at least 2 proxies, got shape " + shape_str(proxies.shape()));
  if (proxies.dim(1) != batch.embeddings.dim(1))
    throw ShapeError("proxy_nca_loss: proxies " + shape_str(proxies.shape()) + " vs embeddings " +
                     shape_str(batch.embeddings.shape()));
  const std::size_t b = batch.size(), np = proxies.dim(0);
  for (std::size_t l : batch.labels)
    if (l >= np) throw InvalidArgument("proxy_nca_loss: label " + std::to_string(l) + " has no proxy");
  const Tensor unit = l2_normalize(proxies);
  std::vector<std::size_t> rows, cols;
  for (std::size_t k = 0; k < b; ++k)
    for (std::size_t z = 0; z < np; ++z) {
      rows.push_back(k);
      cols.push_back(z);
    }
  const Tensor diff = gather_rows(batch.embeddings, rows) - gather_rows(unit, cols);
  const Tensor d = sum(diff * diff, 1);  // [b * np]
  std::vector<std::size_t> pos, neg;
  for (std::size_t k = 0; k < b; ++k)
    for (std::size_t z = 0; z < np; ++z) (z == batch.labels[k] ? pos : neg).push_back(k * np + z);
  const Tensor d_neg = reshape(gather_elements(d, neg), {b, np - 1});
  const Tensor lse = log(sum(exp(-d_neg), 1));
  return mean(gather_elements(d, pos) + lse);
}

Tensor multi_similarity_loss(const EmbeddingBatch& batch, const MultiSimilarityOptions& options) {
  check_batch(batch, "multi_similarity_loss");
  const std::size_t b = batch.size();
  const Tensor sim = matmul(batch.embeddings, transpose(batch.embeddings));
  const Tensor flat = reshape(sim, {b * b});
  const auto s = flat.data();
  const auto& labels = batch.labels;
  Tensor total;
  std::size_t anchors = 0;
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < b; ++i) {
    double min_pos = std::numeric_limits<double>::infinity();
    double max_neg = -std::numeric_limits<double>::infinity();
    bool has_pos = false, has_neg = false;
    for (std::size_t k = 0; k < b; ++k) {
      if (k == i) continue;
      if (labels[k] == labels[i]) {
        min_pos = std::min(min_pos, s[i * b + k]);
        has_pos = true;
      } else {
        max_neg = std::max(max_neg, s[i * b + k]);
        has_neg = true;
      }
    }
    pos.clear();
    neg.clear();
    for (std::size_t k = 0; k < b; ++k) {
      if (k == i) continue;
      const double v = s[i * b + k];
      if (labels[k] == labels[i]) {
        if (!has_neg || v < max_neg + options.epsilon) pos.push_back(i * b + k);
      } else {
        if (!has_pos || v > min_pos - options.epsilon) neg.push_back(i * b + k);
      }
    }
    if (pos.empty() && neg.empty()) continue;
    Tensor term = Tensor::scalar(0.0);
    if (!pos.empty()) {
      const Tensor e = exp(add_scalar(gather_elements(flat, pos), -options.lambda) * -options.alpha);
      term = term + log(add_scalar(sum(e), 1.0)) * (1.0 / options.alpha);
    }
    if (!neg.empty()) {
      const Tensor e = exp(add_scalar(gather_elements(flat, neg), -options.lambda) * options.beta);
      term = term + log(add_scalar(sum(e), 1.0)) * (1.0 / options.beta);
    }
    total = total.defined() ? total + term : term;
    ++anchors;
  }
  if (anchors == 0) return sum(flat) * 0.0;
  return total * (1.0 / static_cast<double>(anchors));
}

double recall_at_k(const EmbeddingStore& queries, const EmbeddingStore& gallery, std::size_t k,
                   bool same_set) {
  const std::size_t ks[] = {k};
  return recall_impl(queries, gallery, ks, same_set, true)[0];
}

std::vector<double> recall_at_ks(const EmbeddingStore& queries, const EmbeddingStore& gallery,
                                 std::span<const std::size_t> ks, bool same_set) {
  return recall_impl(queries, gallery, ks, same_set, true);
}

namespace serial {
double recall_at_k(const EmbeddingStore& queries, const EmbeddingStore& gallery, std::size_t k,
                   bool same_set) {
  const std::size_t ks[] = {k};
  return recall_impl(queries, gallery, ks, same_set, false)[0];
}
}  // namespace serial

RetrievalModel finetune(const ViTParams& teacher, const Dataset& train,
                        const RetrievalConfig& config, std::uint64_t seed) {
  config.validate();
  train.validate();
  if (train.classes.size() < 2) throw InvalidArgument("finetune: need at least 2 training classes");
  Rng init_rng(derive_seed(seed, 1));
  Rng rng(derive_seed(seed, 2));

  RetrievalModel model;
  model.params = teacher.clone(true);
  attach_retrieval_head(model.params, config.embed_dim, init_rng);
  model.train_classes = train.classes;
  std::sort(model.train_classes.begin(), model.train_classes.end());
  const std::size_t num_classes = model.train_classes.size();
  std::map<ClassId, std::size_t> slot;
  for (std::size_t i = 0; i < num_classes; ++i) slot[model.train_classes[i]] = i;

  std::vector<double> proxy_init(num_classes * config.embed_dim);
  for (double& v : proxy_init) v = init_rng.normal();
  model.proxies = Tensor::from_data({num_classes, config.embed_dim}, std::move(proxy_init), true);
  model.beta = Tensor::full({num_classes}, config.margin_beta, true);

  std::vector<std::vector<std::size_t>> rows_by_slot(num_classes);
  for (std::size_t i = 0; i < train.size(); ++i) rows_by_slot[slot.at(train.records[i].class_id)].push_back(i);

  const std::size_t per_batch = config.batch_size();
  const std::size_t steps_per_epoch =
      config.steps_per_epoch > 0 ? config.steps_per_epoch : (train.size() + per_batch - 1) / per_batch;
  const std::size_t total_steps = config.epochs * steps_per_epoch;
  const std::size_t p = std::min(config.classes_per_batch, num_classes);
  const std::size_t q = config.samples_per_class;

  std::vector<Tensor> backbone = model.params.parameters();
  std::vector<Tensor> proxies{model.proxies};
  std::vector<Tensor> betas{model.beta};
  std::vector<std::vector<double>> velocity, proxy_velocity, beta_velocity;
  const MultiSimilarityOptions ms{config.ms_alpha, config.ms_beta, config.ms_lambda, config.ms_epsilon};

  std::vector<std::size_t> class_order(num_classes);
  for (std::size_t step = 0; step < total_steps; ++step) {
    std::iota(class_order.begin(), class_order.end(), std::size_t{0});
    for (std::size_t i = 0; i < p; ++i)
      std::swap(class_order[i], class_order[i + rng.uniform_index(num_classes - i)]);
    EmbeddingBatch batch;
    std::vector<Tensor> rows;
    for (std::size_t c = 0; c < p; ++c) {
      std::vector<std::size_t> pool = rows_by_slot[class_order[c]];
      for (std::size_t j = 0; j < q; ++j) {
        std::size_t pick;
        if (pool.size() >= q) {
          std::swap(pool[j], pool[j + rng.uniform_index(pool.size() - j)]);
          pick = pool[j];
        } else {
          pick = pool[rng.uniform_index(pool.size())];
        }
        const Image view = center_crop(train.images[pick], model.params.config.image_size);
        rows.push_back(reshape(embed_retrieval(model.params, view), {1, config.embed_dim}));
        batch.labels.push_back(class_order[c]);
      }
    }
    batch.embeddings = concat(rows, 0);

    Tensor loss;
    switch (config.loss) {
      case LossKind::kMargin: {
        const auto pairs = config.sampling == PairSampling::kAll
                               ? all_pairs(batch.labels)
                               : distance_weighted_pairs(batch.embeddings, batch.labels, rng);
        loss = margin_loss(batch, model.beta, config.margin_alpha, pairs);
        break;
      }
      case LossKind::kProxyNca: loss = proxy_nca_loss(batch, model.proxies); break;
      case LossKind::kMultiSimilarity: loss = multi_similarity_loss(batch, ms); break;
    }
    const double value = loss.item();
    if (!std::isfinite(value))
      throw TrainingError("finetune: non-finite loss at step " + std::to_string(step));
    loss.backward();
    sgd_step(backbone, velocity, config.learning_rate, config.momentum, config.weight_decay);
    sgd_step(proxies, proxy_velocity, config.proxy_lr, config.momentum, 0.0);
    sgd_step(betas, beta_velocity, config.beta_lr, config.momentum, 0.0);
    model.steps.push_back({step, step / steps_per_epoch, value});
  }
  return model;
}

}  // namespace sslvit
