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

#define EIGEN_DONT_PARALLELIZE
#include "sslvit/fewshot.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "sslvit/errors.hpp"
#include "sslvit/kernels.hpp"

namespace sslvit {
namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Mean softmax cross-entropy gradient plus the L2 term on weight rows.
Matrix logistic_gradient(const Matrix& x, const Matrix& y, const Matrix& theta, double l2) {
  Matrix z = x * theta;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double mx = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - mx).exp();
    z.row(i) /= z.row(i).sum();
  }
  Matrix g = x.transpose() * (z - y);
  g /= static_cast<double>(x.rows());
  const Eigen::Index d = theta.rows() - 1;
  g.topRows(d) += l2 * theta.topRows(d);
  return g;
}

}  // namespace

Feature extract_feature(const ViTParams& teacher, const Image& image) {
  NoGradGuard no_grad;
  return encode(teacher, image).to_vector();
}

std::vector<ClassStatistics> class_statistics(
    const std::map<ClassId, std::vector<Feature>>& features_by_class) {
  std::vector<ClassStatistics> out;
  out.reserve(features_by_class.size());
  for (const auto& [cls, feats] : features_by_class) {
    if (feats.size() < 2)
      throw InvalidArgument("class_statistics: class " + std::to_string(cls) + " has " +
                            std::to_string(feats.size()) + " samples, need at least 2");
    const std::size_t d = feats[0].size();
    ClassStatistics s;
    s.class_id = cls;
    s.count = feats.size();
    s.mean.assign(d, 0.0);
    std::vector<double> m2(d * d, 0.0);
    std::vector<double> delta(d);
    double n = 0.0;
    for (const auto& x : feats) {
      if (x.size() != d) throw ShapeError("class_statistics: inconsistent feature lengths");
      n += 1.0;
      for (std::size_t i = 0; i < d; ++i) {
        delta[i] = x[i] - s.mean[i];
        s.mean[i] += delta[i] / n;
      }
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) m2[i * d + j] += delta[i] * (x[j] - s.mean[j]);
    }
    s.covariance.assign(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j) {
        const double v = m2[i * d + j] / (n - 1.0);
        s.covariance[i * d + j] = v;
        s.covariance[j * d + i] = v;
      }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ClassStatistics> class_statistics(const EmbeddingStore& store) {
  std::map<ClassId, std::vector<Feature>> grouped;
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto r = store.row(i);
    grouped[store.labels[i]].emplace_back(r.begin(), r.end());
  }
  return class_statistics(grouped);
}

CalibratedDistribution calibrate(std::span<const double> feature,
                                 std::span<const ClassStatistics> base_stats, std::size_t k,
                                 double alpha, std::size_t source_support_index) {
  if (base_stats.empty()) throw InvalidArgument("calibrate: no base classes");
  if (k == 0) throw InvalidArgument("calibrate: k must be positive");
  if (k > base_stats.size())
    throw InvalidArgument("calibrate: k = " + std::to_string(k) + " exceeds " +
                          std::to_string(base_stats.size()) + " base classes");
  if (alpha < 0.0) throw InvalidArgument("calibrate: alpha must be nonnegative");
  const std::size_t d = feature.size();
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(base_stats.size());
  for (std::size_t b = 0; b < base_stats.size(); ++b) {
    if (base_stats[b].dim() != d) throw ShapeError("calibrate: base statistics dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double diff = base_stats[b].mean[i] - feature[i];
      s += diff * diff;
    }
    dist.emplace_back(std::sqrt(s), b);
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end(),
                    [&](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first < b.first;
                      return base_stats[a.second].class_id < base_stats[b.second].class_id;
                    });
  CalibratedDistribution out;
  out.source_support_index = source_support_index;
  out.mean.assign(d, 0.0);
  out.covariance.assign(d * d, 0.0);
  for (std::size_t t = 0; t < k; ++t) {
    const ClassStatistics& s = base_stats[dist[t].second];
    out.selected.push_back(s.class_id);
    for (std::size_t i = 0; i < d; ++i) out.mean[i] += s.mean[i];
    for (std::size_t i = 0; i < d * d; ++i) out.covariance[i] += s.covariance[i];
  }
  for (std::size_t i = 0; i < d; ++i) out.mean[i] = (out.mean[i] + feature[i]) / static_cast<double>(k + 1);
  for (double& v : out.covariance) v /= static_cast<double>(k);
  for (std::size_t i = 0; i < d; ++i) out.covariance[i * d + i] += alpha;
  return out;
}

std::vector<Feature> sample_augmented(const CalibratedDistribution& dist, std::size_t n, Rng& rng) {
  const std::size_t d = dist.mean.size();
  if (dist.covariance.size() != d * d) throw ShapeError("sample_augmented: covariance size mismatch");
  const Eigen::Map<const Matrix> cov(dist.covariance.data(), static_cast<Eigen::Index>(d),
                                     static_cast<Eigen::Index>(d));
  Matrix factor;
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() == Eigen::Success) {
    factor = llt.matrixL();
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    const auto& values = eig.eigenvalues();
    const double scale_ref = values.cwiseAbs().maxCoeff();
    if (values.minCoeff() < -1e-8 * std::max(scale_ref, 1e-300))
      throw DomainError("sample_augmented: covariance is not positive semidefinite (min eigenvalue " +
                        std::to_string(values.minCoeff()) + ")");
    factor = eig.eigenvectors() * values.cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }
  std::vector<Feature> out;
  out.reserve(n);
  Eigen::VectorXd z(static_cast<Eigen::Index>(d));
  for (std::size_t s = 0; s < n; ++s) {
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    const Eigen::VectorXd x = factor * z;
    Feature f(d);
    for (std::size_t i = 0; i < d; ++i) f[i] = dist.mean[i] + x[static_cast<Eigen::Index>(i)];
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<double> LogisticModel::logits(std::span<const double> x) const {
  if (x.size() != dim) throw ShapeError("LogisticModel: feature length mismatch");
  std::vector<double> z(bias);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t c = 0; c < num_classes; ++c) z[c] += x[i] * weights[i * num_classes + c];
  return z;
}

std::size_t LogisticModel::predict(std::span<const double> x) const {
  const auto z = logits(x);
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

LogisticModel fit_logistic(const std::vector<Feature>& features,
                           std::span<const std::size_t> labels, const LogisticOptions& options) {
  if (features.empty() || features.size() != labels.size())
    throw InvalidArgument("fit_logistic: need one label per feature");
  if (options.l2 < 0.0) throw InvalidArgument("fit_logistic: l2 must be nonnegative");
  const std::size_t n = features.size();
  const std::size_t d = features[0].size();
  const std::size_t c = *std::max_element(labels.begin(), labels.end()) + 1;
  if (std::all_of(labels.begin(), labels.end(), [&](std::size_t l) { return l == labels[0]; }))
    throw InvalidArgument("fit_logistic: at least two classes are required");

  const auto ni = static_cast<Eigen::Index>(n);
  const auto di = static_cast<Eigen::Index>(d);
  const auto ci = static_cast<Eigen::Index>(c);
  Matrix x(ni, di + 1);
  Matrix y = Matrix::Zero(ni, ci);
  for (std::size_t r = 0; r < n; ++r) {
    if (features[r].size() != d) throw ShapeError("fit_logistic: inconsistent feature lengths");
    for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = features[r][j];
    x(static_cast<Eigen::Index>(r), di) = 1.0;
    y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(labels[r])) = 1.0;
  }
  const Matrix gram = (x.transpose() * x) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  const double lipschitz = 0.5 * eig.eigenvalues().maxCoeff() + options.l2;
  const double step = 1.0 / lipschitz;

  Matrix theta = Matrix::Zero(di + 1, ci);
  Matrix prev = theta;
  double t = 1.0;
  LogisticModel model;
  model.dim = d;
  model.num_classes = c;
  Matrix grad;
  for (std::size_t it = 0; it < options.max_iter; ++it) {
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const Matrix look = theta + ((t - 1.0) / t_next) * (theta - prev);
    grad = logistic_gradient(x, y, look, options.l2);
    model.iterations = it + 1;
    const double gnorm = grad.cwiseAbs().maxCoeff();
    if (gnorm < options.grad_tol) {
      theta = look;
      model.converged = true;
      model.final_grad_norm = gnorm;
      break;
    }
    Matrix next = look - step * grad;
    // Restart momentum when the step opposes the direction of travel.
    if ((grad.array() * (next - theta).array()).sum() > 0.0) {
      t = 1.0;
    } else {
      t = t_next;
    }
    prev = std::move(theta);
    theta = std::move(next);
  }
  if (!model.converged)
    model.final_grad_norm = logistic_gradient(x, y, theta, options.l2).cwiseAbs().maxCoeff();
  model.weights.resize(d * c);
  model.bias.resize(c);
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t k = 0; k < c; ++k)
      model.weights[j * c + k] = theta(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
  for (std::size_t k = 0; k < c; ++k) model.bias[k] = theta(di, static_cast<Eigen::Index>(k));
  return model;
}

Episode sample_episode(const EmbeddingStore& novel, std::size_t way, std::size_t shot,
                       std::size_t query_per_class, Rng& rng) {
  if (way < 2 || shot == 0) throw InvalidArgument("sample_episode: need way >= 2 and shot >= 1");
  std::map<ClassId, std::vector<std::size_t>> rows;
  for (std::size_t i = 0; i < novel.size(); ++i) rows[novel.labels[i]].push_back(i);
  std::vector<ClassId> eligible;
  for (const auto& [cls, r] : rows)
    if (r.size() >= shot + query_per_class) eligible.push_back(cls);
  if (eligible.size() < way)
    throw InvalidArgument("sample_episode: only " + std::to_string(eligible.size()) +
                          " classes have " + std::to_string(shot + query_per_class) +
                          " samples, need " + std::to_string(way));
  for (std::size_t i = 0; i < way; ++i)
    std::swap(eligible[i], eligible[i + rng.uniform_index(eligible.size() - i)]);
  Episode e;
  e.way = way;
  e.shot = shot;
  e.query_per_class = query_per_class;
  for (std::size_t label = 0; label < way; ++label) {
    const ClassId cls = eligible[label];
    e.classes.push_back(cls);
    std::vector<std::size_t> idx = rows[cls];
    const std::size_t take = shot + query_per_class;
    for (std::size_t i = 0; i < take; ++i) std::swap(idx[i], idx[i + rng.uniform_index(idx.size() - i)]);
    for (std::size_t i = 0; i < take; ++i) {
      auto r = novel.row(idx[i]);
      if (i < shot) {
        e.support.emplace_back(r.begin(), r.end());
        e.support_labels.push_back(label);
      } else {
        e.query.emplace_back(r.begin(), r.end());
        e.query_labels.push_back(label);
      }
    }
  }
  return e;
}

EpisodeOutcome run_episode(const Episode& episode, std::span<const ClassStatistics> base_stats,
                           const FewShotConfig& config, Rng& rng) {
  if (episode.support.empty() || episode.query.empty())
    throw InvalidArgument("run_episode: empty support or query set");
  std::vector<Feature> train = episode.support;
  std::vector<std::size_t> labels = episode.support_labels;
  if (config.n_augment > 0) {
    for (std::size_t s = 0; s < episode.support.size(); ++s) {
      const auto dist = calibrate(episode.support[s], base_stats, config.k, config.alpha, s);
      for (auto& f : sample_augmented(dist, config.n_augment, rng)) {
        train.push_back(std::move(f));
        labels.push_back(episode.support_labels[s]);
      }
    }
  }
  const LogisticModel model = fit_logistic(train, labels, config.logistic);
  EpisodeOutcome out;
  std::size_t correct = 0;
  for (std::size_t q = 0; q < episode.query.size(); ++q) {
    const std::size_t p = model.predict(episode.query[q]);
    out.predictions.push_back(p);
    if (p == episode.query_labels[q]) ++correct;
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(episode.query.size());
  return out;
}

FewShotSummary summarize_accuracies(std::span<const double> accuracies) {
  if (accuracies.empty()) throw InvalidArgument("summarize_accuracies: no tasks");
  FewShotSummary s;
  s.accuracies.assign(accuracies.begin(), accuracies.end());
  const double n = static_cast<double>(accuracies.size());
  s.mean = kernels::pairwise_sum(accuracies) / n;
  if (accuracies.size() >= 2) {
    std::vector<double> sq(accuracies.size());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = (accuracies[i] - s.mean) * (accuracies[i] - s.mean);
    const double stddev = std::sqrt(kernels::pairwise_sum(sq) / (n - 1.0));
    s.ci95 = 1.96 * stddev / std::sqrt(n);
  }
  return s;
}

FewShotSummary evaluate_fewshot(const TaskSource& source, std::size_t num_tasks,
                                std::span<const ClassStatistics> base_stats,
                                const FewShotConfig& config, std::uint64_t master_seed) {
  if (num_tasks == 0) throw InvalidArgument("evaluate_fewshot: num_tasks must be positive");
  std::vector<double> acc(num_tasks, 0.0);
  std::exception_ptr failure;
  const auto tasks = static_cast<std::ptrdiff_t>(num_tasks);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < tasks; ++i) {
    try {
      Rng rng(derive_seed(master_seed, static_cast<std::uint64_t>(i)));
      const Episode episode = source(rng);
      acc[static_cast<std::size_t>(i)] = run_episode(episode, base_stats, config, rng).accuracy;
    } catch (...) {
#pragma omp critical(sslvit_fewshot_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return summarize_accuracies(acc);
}

}  // namespace sslvit
