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

// Dense row-major kernels. Every kernel has a serial reference under
// kernels::serial and an OpenMP version in kernels. The parallel versions
// split work over output rows only, so each output element is accumulated
// in the same order as the reference and results are bit-identical for any
// thread count.

#include <cstddef>
#include <cstdint>
#include <span>

namespace sslvit::kernels {

/// C[m,n] (+)= A[m,k] * B[k,n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);

/// C[m,n] (+)= A[k,m]^T * B[k,n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);

/// C[m,n] (+)= A[m,k] * B[n,k]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);

/// out[i,j] = ||q_i - g_j||^2 for q: [m,d], g: [n,d].
void pairwise_sq_dist(std::size_t m, std::size_t n, std::size_t d, std::span<const double> q,
                      std::span<const double> g, std::span<double> out);

/// For each query row of a [m,n] distance matrix, 1 if any of its k nearest
/// gallery items (ties by ascending index, gallery item `i` skipped for query
/// `i` when exclude_self) carries the query's label, else 0.
void knn_label_hits(std::size_t m, std::size_t n, std::span<const double> dist,
                    std::span<const std::uint32_t> query_labels,
                    std::span<const std::uint32_t> gallery_labels, std::size_t k,
                    bool exclude_self, std::span<std::uint8_t> hits);

namespace serial {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);
void pairwise_sq_dist(std::size_t m, std::size_t n, std::size_t d, std::span<const double> q,
                      std::span<const double> g, std::span<double> out);
void knn_label_hits(std::size_t m, std::size_t n, std::span<const double> dist,
                    std::span<const std::uint32_t> query_labels,
                    std::span<const std::uint32_t> gallery_labels, std::size_t k,
                    bool exclude_self, std::span<std::uint8_t> hits);

}  // namespace serial

/// Sets the OpenMP worker count used by the parallel kernels (>= 1).
void set_num_threads(int n);
int num_threads();

/// Summation by recursive halving; the association order depends only on
/// the length of the input.
double pairwise_sum(std::span<const double> values);

}  // namespace sslvit::kernels
