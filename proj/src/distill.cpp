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

#include "sslvit/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "sslvit/errors.hpp"

namespace sslvit {

void DistillConfig::validate() const {
  auto fail = [](const std::string& m) { throw InvalidArgument("DistillConfig: " + m); };
  if (!(tau_s > 0.0) || !(tau_t > 0.0)) fail("temperatures must be positive");
  if (!(lambda_base > 0.0 && lambda_base < 1.0)) fail("lambda_base must lie in (0, 1)");
  if (!(center_momentum > 0.0 && center_momentum < 1.0)) fail("center_momentum must lie in (0, 1)");
  if (global_size == 0 || local_size == 0) fail("crop sizes must be positive");
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) fail("momentum must lie in [0, 1)");
  if (weight_decay < 0.0) fail("weight_decay must be nonnegative");
}

DistillState DistillState::init(const ViTConfig& vit, const DistillConfig& config, Rng& rng) {
  DistillState s;
  s.student = ViTParams::init(vit, rng, true);
  s.teacher = s.student.clone(false);
  if (config.centering_enabled) s.center.assign(vit.out_dim, 0.0);
  return s;
}

std::vector<double> sharpen(std::span<const double> logits, double tau,
                            std::span<const double> center) {
  if (!(tau > 0.0)) throw DomainError("sharpen: temperature must be positive, got " + std::to_string(tau));
  if (!center.empty() && center.size() != logits.size())
    throw ShapeError("sharpen: center length " + std::to_string(center.size()) +
                     " differs from logits length " + std::to_string(logits.size()));
  if (logits.empty()) throw ShapeError("sharpen: empty logits");
  std::vector<double> z(logits.size());
  for (std::size_t i = 0; i < z.size(); ++i)
    z[i] = (logits[i] - (center.empty() ? 0.0 : center[i])) / tau;
  const double mx = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - mx);
    total += v;
  }
  for (double& v : z) v /= total;
  return z;
}

std::vector<Image> multi_crop(const ImageU8& image, const DistillConfig& config, Rng& rng) {
  const std::size_t need = std::max(config.global_size, config.local_size);
  if (image.height < need || image.width < need) {
    throw InvalidArgument("multi_crop: image " + std::to_string(image.height) + "x" +
                          std::to_string(image.width) + " smaller than crop size " +
                          std::to_string(need));
  }
  auto one = [&](std::size_t size) {
    const std::size_t top = rng.uniform_index(image.height - size + 1);
    const std::size_t left = rng.uniform_index(image.width - size + 1);
    const bool flip = rng.bernoulli(0.5);
    return crop(image, top, left, size, flip);
  };
  std::vector<Image> views;
  views.reserve(config.total_views());
  for (int g = 0; g < 2; ++g) views.push_back(one(config.global_size));
  for (std::size_t l = 0; l < config.num_local_views; ++l) views.push_back(one(config.local_size));
  return views;
}

Tensor distillation_loss_from_outputs(const std::vector<std::vector<double>>& teacher_probs,
                                      const std::vector<Tensor>& student_logits, double tau_s) {
  if (!(tau_s > 0.0)) throw DomainError("distillation loss: tau_s must be positive");
  if (student_logits.size() < 2 || teacher_probs.size() != 2)
    throw InvalidArgument("distillation loss needs two global views and at least 2 views in total");
  std::vector<Tensor> log_probs;
  log_probs.reserve(student_logits.size());
  for (const auto& s : student_logits) log_probs.push_back(log_softmax(scale(s, 1.0 / tau_s), 0));
  Tensor total;
  for (std::size_t g = 0; g < 2; ++g) {
    const std::size_t k = teacher_probs[g].size();
    const Tensor target = Tensor::from_data({k}, teacher_probs[g]);
    for (std::size_t v = 0; v < log_probs.size(); ++v) {
      if (v == g) continue;
      const Tensor term = neg(sum(mul(target, log_probs[v])));
      total = total.defined() ? add(total, term) : term;
    }
  }
  return total;
}

DistillForward distillation_forward(const DistillState& state, const std::vector<Image>& views,
                                    const DistillConfig& config) {
  if (views.size() < 2) throw InvalidArgument("distillation loss needs at least 2 views");
  DistillForward out;
  std::vector<std::vector<double>> teacher_probs;
  {
    NoGradGuard no_grad;
    for (std::size_t g = 0; g < 2; ++g) {
      const Tensor logits = head(state.teacher, encode(state.teacher, views[g]));
      out.teacher_logits.push_back(logits.to_vector());
      teacher_probs.push_back(sharpen(logits.data(), config.tau_t, state.center));
    }
  }
  std::vector<Tensor> student_logits;
  student_logits.reserve(views.size());
  for (const auto& v : views) student_logits.push_back(head(state.student, encode(state.student, v)));
  out.loss = distillation_loss_from_outputs(teacher_probs, student_logits, config.tau_s);
  return out;
}

double cosine_lambda(std::size_t step, std::size_t total_steps, double lambda_base) {
  if (total_steps == 0) throw InvalidArgument("cosine_lambda: total_steps must be positive");
  if (step > total_steps)
    throw InvalidArgument("cosine_lambda: step " + std::to_string(step) + " exceeds total " +
                          std::to_string(total_steps));
  if (step == 0) return lambda_base;
  if (step == total_steps) return 1.0;
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps);
  return 1.0 - (1.0 - lambda_base) * (1.0 + std::cos(phase)) / 2.0;
}

void ema_update(DistillState& state, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw InvalidArgument("ema_update: lambda " + std::to_string(lambda) + " outside [0, 1]");
  auto teacher = state.teacher.parameters();
  const auto student = state.student.parameters();
  for (std::size_t p = 0; p < teacher.size(); ++p) {
    auto t = teacher[p].mutable_data();
    auto s = student[p].data();
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = lambda * t[i] + (1.0 - lambda) * s[i];
  }
}

std::vector<double> mean_teacher_logits(const DistillState& state, const std::vector<Image>& images) {
  if (images.empty()) throw InvalidArgument("mean_teacher_logits: no images");
  NoGradGuard no_grad;
  std::vector<double> mean;
  for (const auto& im : images) {
    const Tensor logits = head(state.teacher, encode(state.teacher, im));
    if (mean.empty()) mean.assign(logits.numel(), 0.0);
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += logits.data()[i];
  }
  for (double& v : mean) v /= static_cast<double>(images.size());
  return mean;
}

double teacher_entropy(const DistillState& state, const std::vector<Image>& probe,
                       const DistillConfig& config) {
  if (probe.empty()) throw InvalidArgument("teacher_entropy: empty probe set");
  NoGradGuard no_grad;
  std::vector<double> mean_dist;
  for (const auto& im : probe) {
    const Tensor logits = head(state.teacher, encode(state.teacher, im));
    const auto p = sharpen(logits.data(), config.tau_t, state.center);
    if (mean_dist.empty()) mean_dist.assign(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) mean_dist[i] += p[i];
  }
  double h = 0.0;
  for (double& v : mean_dist) {
    v /= static_cast<double>(probe.size());
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

void sgd_step(std::span<Tensor> params, std::vector<std::vector<double>>& velocity, double lr,
              double momentum, double weight_decay) {
  if (momentum > 0.0 && velocity.size() != params.size()) {
    velocity.clear();
    for (const auto& p : params) velocity.emplace_back(p.numel(), 0.0);
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    if (!p.has_grad()) continue;
    auto w = p.mutable_data();
    auto g = p.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      double step = g[i] + weight_decay * w[i];
      if (momentum > 0.0) {
        velocity[k][i] = momentum * velocity[k][i] + step;
        step = velocity[k][i];
      }
      w[i] -= lr * step;
    }
    p.zero_grad();
  }
}

PretrainResult pretrain(const Dataset& dataset, const ViTConfig& vit, const DistillConfig& config,
                        std::uint64_t seed) {
  if (dataset.size() == 0) throw InvalidArgument("pretrain: empty dataset");
  if (config.epochs == 0) throw InvalidArgument("pretrain: epochs must be positive");
  config.validate();
  vit.validate();
  Rng init_rng(derive_seed(seed, 1));
  Rng rng(derive_seed(seed, 2));
  PretrainResult result{DistillState::init(vit, config, init_rng), {}, {}};
  DistillState& state = result.state;

  const std::size_t n = dataset.size();
  const std::size_t steps_per_epoch =
      config.steps_per_epoch > 0 ? config.steps_per_epoch : (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = config.epochs * steps_per_epoch;

  std::vector<Image> probe;
  for (std::size_t i = 0; i < std::min(std::max<std::size_t>(config.probe_size, 1), n); ++i)
    probe.push_back(center_crop(dataset.images[i], config.global_size));
  // Warm start: a zero center leaves the untrained teacher's common output
  // direction in place, so every image sharpens onto the same few entries.
  if (config.centering_enabled) state.center = mean_teacher_logits(state, probe);
  auto run_probe = [&](std::size_t step) {
    if (config.probe_every == 0 || probe.empty()) return;
    result.probes.push_back({step, teacher_entropy(state, probe, config)});
  };
  run_probe(0);

  std::vector<Tensor> params = state.student.parameters();
  std::vector<std::vector<double>> velocity;
  std::vector<std::size_t> order(n);
  const double inv_batch = 1.0 / static_cast<double>(config.batch_size);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      Tensor batch_loss;
      std::vector<double> logit_sum(vit.out_dim, 0.0);
      for (std::size_t b = 0; b < config.batch_size; ++b) {
        const ImageU8& img = dataset.images[order[(s * config.batch_size + b) % n]];
        const auto views = multi_crop(img, config, rng);
        DistillForward fwd = distillation_forward(state, views, config);
        for (const auto& tl : fwd.teacher_logits)
          for (std::size_t i = 0; i < tl.size(); ++i) logit_sum[i] += tl[i];
        batch_loss = batch_loss.defined() ? add(batch_loss, fwd.loss) : fwd.loss;
      }
      batch_loss = scale(batch_loss, inv_batch);
      const double loss_value = batch_loss.item();
      if (!std::isfinite(loss_value)) {
        throw TrainingError("pretrain: non-finite loss at step " + std::to_string(state.step) +
                            " (epoch " + std::to_string(epoch) + ")");
      }
      batch_loss.backward();
      sgd_step(params, velocity, config.learning_rate, config.momentum, config.weight_decay);

      double lambda;
      if (config.teacher_update == TeacherUpdate::kPerStep) {
        lambda = cosine_lambda(state.step, total_steps, config.lambda_base);
        ema_update(state, lambda);
      } else {
        lambda = cosine_lambda(epoch, config.epochs, config.lambda_base);
        if (s + 1 == steps_per_epoch) ema_update(state, lambda);
      }
      if (config.centering_enabled) {
        const double denom = 2.0 * static_cast<double>(config.batch_size);
        for (std::size_t i = 0; i < state.center.size(); ++i)
          state.center[i] = config.center_momentum * state.center[i] +
                            (1.0 - config.center_momentum) * logit_sum[i] / denom;
      }
      result.steps.push_back({state.step, epoch, loss_value, lambda});
      ++state.step;
      if (config.probe_every > 0 && state.step % config.probe_every == 0) run_probe(state.step);
    }
  }
  if (config.probe_every > 0 && state.step % config.probe_every != 0) run_probe(state.step);
  return result;
}

}  // namespace sslvit
