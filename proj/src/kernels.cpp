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

#include "sslvit/kernels.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include <omp.h>

namespace sslvit::kernels {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 16;

inline void row_nn(std::size_t i, std::size_t k, std::size_t n, const double* a,
                   const double* b, double* c, bool accumulate) {
  double* ci = c + i * n;
  if (!accumulate) std::fill(ci, ci + n, 0.0);
  const double* ai = a + i * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = ai[p];
    const double* bp = b + p * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
  }
}

inline void row_tn(std::size_t i, std::size_t m, std::size_t k, std::size_t n, const double* a,
                   const double* b, double* c, bool accumulate) {
  double* ci = c + i * n;
  if (!accumulate) std::fill(ci, ci + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a[p * m + i];
    const double* bp = b + p * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
  }
}

inline void row_nt(std::size_t i, std::size_t k, std::size_t n, const double* a,
                   const double* b, double* c, bool accumulate) {
  double* ci = c + i * n;
  const double* ai = a + i * k;
  for (std::size_t j = 0; j < n; ++j) {
    const double* bj = b + j * k;
    double s = 0.0;
    for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
    ci[j] = accumulate ? ci[j] + s : s;
  }
}

inline void row_dist(std::size_t i, std::size_t n, std::size_t d, const double* q,
                     const double* g, double* out) {
  const double* qi = q + i * d;
  for (std::size_t j = 0; j < n; ++j) {
    const double* gj = g + j * d;
    double s = 0.0;
    for (std::size_t t = 0; t < d; ++t) {
      const double diff = qi[t] - gj[t];
      s += diff * diff;
    }
    out[i * n + j] = s;
  }
}

std::uint8_t row_hit(std::size_t i, std::size_t n, const double* dist,
                     std::span<const std::uint32_t> query_labels,
                     std::span<const std::uint32_t> gallery_labels, std::size_t k,
                     bool exclude_self, std::vector<std::size_t>& order) {
  order.clear();
  for (std::size_t j = 0; j < n; ++j) {
    if (exclude_self && j == i) continue;
    order.push_back(j);
  }
  const double* row = dist + i * n;
  const std::size_t kk = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk), order.end(),
                    [row](std::size_t x, std::size_t y) {
                      return row[x] < row[y] || (row[x] == row[y] && x < y);
                    });
  for (std::size_t t = 0; t < kk; ++t) {
    if (gallery_labels[order[t]] == query_labels[i]) return 1;
  }
  return 0;
}

}  // namespace

namespace serial {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) row_nn(i, k, n, a.data(), b.data(), c.data(), accumulate);
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    row_tn(i, m, k, n, a.data(), b.data(), c.data(), accumulate);
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) row_nt(i, k, n, a.data(), b.data(), c.data(), accumulate);
}

void pairwise_sq_dist(std::size_t m, std::size_t n, std::size_t d, std::span<const double> q,
                      std::span<const double> g, std::span<double> out) {
  for (std::size_t i = 0; i < m; ++i) row_dist(i, n, d, q.data(), g.data(), out.data());
}

void knn_label_hits(std::size_t m, std::size_t n, std::span<const double> dist,
                    std::span<const std::uint32_t> query_labels,
                    std::span<const std::uint32_t> gallery_labels, std::size_t k,
                    bool exclude_self, std::span<std::uint8_t> hits) {
  std::vector<std::size_t> order;
  order.reserve(n);
  for (std::size_t i = 0; i < m; ++i)
    hits[i] = row_hit(i, n, dist.data(), query_labels, gallery_labels, k, exclude_self, order);
}

}  // namespace serial

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    row_nn(static_cast<std::size_t>(i), k, n, a.data(), b.data(), c.data(), accumulate);
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    row_tn(static_cast<std::size_t>(i), m, k, n, a.data(), b.data(), c.data(), accumulate);
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    row_nt(static_cast<std::size_t>(i), k, n, a.data(), b.data(), c.data(), accumulate);
}

void pairwise_sq_dist(std::size_t m, std::size_t n, std::size_t d, std::span<const double> q,
                      std::span<const double> g, std::span<double> out) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * d >= kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    row_dist(static_cast<std::size_t>(i), n, d, q.data(), g.data(), out.data());
}

void knn_label_hits(std::size_t m, std::size_t n, std::span<const double> dist,
                    std::span<const std::uint32_t> query_labels,
                    std::span<const std::uint32_t> gallery_labels, std::size_t k,
                    bool exclude_self, std::span<std::uint8_t> hits) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel if (m * n >= kParallelWork)
  {
    std::vector<std::size_t> order;
    order.reserve(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
      const auto row = static_cast<std::size_t>(i);
      hits[row] = row_hit(row, n, dist.data(), query_labels, gallery_labels, k, exclude_self,
                          order);
    }
  }
}

void set_num_threads(int n) { omp_set_num_threads(std::max(1, n)); }

int num_threads() { return omp_get_max_threads(); }

double pairwise_sum(std::span<const double> values) {
  if (values.empty()) return 0.0;
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

}  // namespace sslvit::kernels
