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
#include <vector>

#include "sslvit/data.hpp"
#include "sslvit/image.hpp"
#include "sslvit/rng.hpp"
#include "sslvit/tensor.hpp"
#include "sslvit/vit.hpp"

namespace sslvit {

enum class TeacherUpdate {
  kPerStep,   // EMA after every optimizer step
  kPerEpoch,  // teacher frozen for an epoch, EMA once at its end
};

struct DistillConfig {
  double tau_s = 0.1;
  double tau_t = 0.07;
  std::size_t num_local_views = 4;
  std::size_t global_size = 32;
  std::size_t local_size = 16;
  double lambda_base = 0.996;
  std::size_t epochs = 10;
  std::size_t steps_per_epoch = 0;  // 0: ceil(dataset size / batch_size)
  std::size_t batch_size = 4;
  double learning_rate = 0.002;
  double momentum = 0.0;
  double weight_decay = 0.0;
  bool centering_enabled = true;
  double center_momentum = 0.9;
  TeacherUpdate teacher_update = TeacherUpdate::kPerStep;
  std::size_t probe_every = 10;  // 0 disables the entropy probe
  std::size_t probe_size = 16;

  std::size_t total_views() const { return num_local_views + 2; }
  /// Throws InvalidArgument on out-of-range values.
  void validate() const;
};

struct DistillState {
  ViTParams student;           // trained by SGD
  ViTParams teacher;           // EMA of the student; never carries gradients
  std::vector<double> center;  // length out_dim; empty when centering is off
  std::size_t step = 0;

  /// Student initialized from `rng`; teacher starts as an exact copy.
  static DistillState init(const ViTConfig& vit, const DistillConfig& config, Rng& rng);
};

/// exp((logit_i - c_i) / tau) normalized over i, max-subtracted. Throws
/// DomainError for tau <= 0.
std::vector<double> sharpen(std::span<const double> logits, double tau,
                            std::span<const double> center = {});

/// Two global crops then num_local_views local crops; each a random
/// axis-aligned window, mirrored with probability 0.5.
std::vector<Image> multi_crop(const ImageU8& image, const DistillConfig& config, Rng& rng);

/// Cross-entropy H(a, b) = -sum a_i log b_i between fixed teacher
/// distributions and student log-probabilities, summed over every
/// (global g, view v != g) pair. teacher_probs[g] pairs with view g.
Tensor distillation_loss_from_outputs(const std::vector<std::vector<double>>& teacher_probs,
                                      const std::vector<Tensor>& student_logits, double tau_s);

struct DistillForward {
  Tensor loss;
  std::vector<std::vector<double>> teacher_logits;  // one per global view
};

/// Student sees every view, teacher (no graph) sees the two globals.
DistillForward distillation_forward(const DistillState& state, const std::vector<Image>& views,
                                    const DistillConfig& config);

inline Tensor distillation_loss(const DistillState& state, const std::vector<Image>& views,
                                const DistillConfig& config) {
  return distillation_forward(state, views, config).loss;
}

/// 1 - (1 - base) * (1 + cos(pi * step / total)) / 2, with both endpoints
/// returned exactly.
double cosine_lambda(std::size_t step, std::size_t total_steps, double lambda_base);

/// teacher <- lambda * teacher + (1 - lambda) * student, elementwise.
void ema_update(DistillState& state, double lambda);

/// Average teacher head output over `images`. pretrain starts the center
/// here, before the first step.
std::vector<double> mean_teacher_logits(const DistillState& state, const std::vector<Image>& images);

/// Entropy of the mean sharpened teacher distribution over `probe` images.
double teacher_entropy(const DistillState& state, const std::vector<Image>& probe,
                       const DistillConfig& config);

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  double lambda = 0.0;
};

struct ProbeRecord {
  std::size_t step = 0;
  double entropy = 0.0;
};

struct PretrainResult {
  DistillState state;
  std::vector<StepRecord> steps;
  std::vector<ProbeRecord> probes;
};

/// Self-distillation loop. Deterministic given `seed`. Throws TrainingError
/// naming the step when the loss becomes non-finite.
PretrainResult pretrain(const Dataset& dataset, const ViTConfig& vit, const DistillConfig& config,
                        std::uint64_t seed);

/// SGD step with optional momentum and L2 weight decay folded into the
/// gradient;
/// `velocity` is resized on first use. Clears gradients afterwards.
void sgd_step(std::span<Tensor> params, std::vector<std::vector<double>>& velocity, double lr,
              double momentum, double weight_decay);

}  // namespace sslvit
