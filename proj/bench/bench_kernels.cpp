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

// Serial reference against the OpenMP kernels. Thread count is the second
// benchmark argument; the serial rows ignore it.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "sslvit/kernels.hpp"
#include "sslvit/rng.hpp"

namespace {

using namespace sslvit;

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

template <bool kParallel>
void BM_GemmNN(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  kernels::set_num_threads(static_cast<int>(state.range(1)));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (kParallel) {
      kernels::gemm_nn(n, n, n, a, b, c, false);
    } else {
      kernels::serial::gemm_nn(n, n, n, a, b, c, false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
  kernels::set_num_threads(1);
}

template <bool kParallel>
void BM_PairwiseSqDist(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 64;
  kernels::set_num_threads(static_cast<int>(state.range(1)));
  const auto q = random_values(n * d, 3);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    if constexpr (kParallel) {
      kernels::pairwise_sq_dist(n, n, d, q, q, out);
    } else {
      kernels::serial::pairwise_sq_dist(n, n, d, q, q, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
  kernels::set_num_threads(1);
}

}  // namespace

BENCHMARK(BM_GemmNN<false>)->Args({64, 1})->Args({256, 1});
BENCHMARK(BM_GemmNN<true>)->ArgsProduct({{64, 256}, {1, 2, 4}});
BENCHMARK(BM_PairwiseSqDist<false>)->Args({256, 1})->Args({1024, 1});
BENCHMARK(BM_PairwiseSqDist<true>)->ArgsProduct({{256, 1024}, {1, 2, 4}});

BENCHMARK_MAIN();
