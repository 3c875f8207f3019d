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

#include <doctest.h>

#include <cmath>
#include <vector>

#include "sslvit/kernels.hpp"
#include "sslvit/rng.hpp"

using namespace sslvit;

namespace {

std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

struct ThreadScope {
  explicit ThreadScope(int n) : previous(kernels::num_threads()) { kernels::set_num_threads(n); }
  ~ThreadScope() { kernels::set_num_threads(previous); }
  int previous;
};

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("gemm variants match a naive triple loop") {
    Rng rng(1);
    const std::size_t m = 7, k = 5, n = 6;
    const auto a = random_vector(m * k, rng), b = random_vector(k * n, rng);
    std::vector<double> expect(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t t = 0; t < k; ++t) expect[i * n + j] += a[i * k + t] * b[t * n + j];

    std::vector<double> c(m * n);
    kernels::serial::gemm_nn(m, k, n, a, b, c, false);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(expect[i]).epsilon(1e-13));

    std::vector<double> at(k * m), bt(n * k);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t t = 0; t < k; ++t) at[t * m + i] = a[i * k + t];
    for (std::size_t t = 0; t < k; ++t)
      for (std::size_t j = 0; j < n; ++j) bt[j * k + t] = b[t * n + j];
    kernels::serial::gemm_tn(m, k, n, at, b, c, false);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(expect[i]).epsilon(1e-13));
    kernels::serial::gemm_nt(m, k, n, a, bt, c, false);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(expect[i]).epsilon(1e-13));

    kernels::serial::gemm_nn(m, k, n, a, b, c, true);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(2.0 * expect[i]).epsilon(1e-13));
  }

  TEST_CASE("parallel kernels are bit-identical to the serial reference") {
    ThreadScope threads(4);
    Rng rng(2);
    const std::size_t m = 96, k = 80, n = 72;
    const auto a = random_vector(m * k, rng), b = random_vector(k * n, rng);
    const auto at = random_vector(k * m, rng), bt = random_vector(n * k, rng);
    std::vector<double> s(m * n), p(m * n);
    kernels::serial::gemm_nn(m, k, n, a, b, s, false);
    kernels::gemm_nn(m, k, n, a, b, p, false);
    CHECK(s == p);
    kernels::serial::gemm_tn(m, k, n, at, b, s, false);
    kernels::gemm_tn(m, k, n, at, b, p, false);
    CHECK(s == p);
    kernels::serial::gemm_nt(m, k, n, a, bt, s, true);
    kernels::gemm_nt(m, k, n, a, bt, p, true);
    CHECK(s == p);

    const std::size_t q = 300, g = 280, d = 16;
    const auto qv = random_vector(q * d, rng), gv = random_vector(g * d, rng);
    std::vector<double> ds(q * g), dp(q * g);
    kernels::serial::pairwise_sq_dist(q, g, d, qv, gv, ds);
    kernels::pairwise_sq_dist(q, g, d, qv, gv, dp);
    CHECK(ds == dp);

    std::vector<std::uint32_t> ql(q), gl(g);
    for (auto& l : ql) l = static_cast<std::uint32_t>(rng.uniform_index(5));
    for (auto& l : gl) l = static_cast<std::uint32_t>(rng.uniform_index(5));
    std::vector<std::uint8_t> hs(q), hp(q);
    for (std::size_t kk : {1u, 3u, 10u}) {
      kernels::serial::knn_label_hits(q, g, ds, ql, gl, kk, false, hs);
      kernels::knn_label_hits(q, g, dp, ql, gl, kk, false, hp);
      CHECK(hs == hp);
    }
  }

  TEST_CASE("pairwise distances are exact squared differences") {
    const std::vector<double> q{0.0, 0.0, 1.0, 1.0};
    const std::vector<double> g{3.0, 4.0};
    std::vector<double> out(2);
    kernels::pairwise_sq_dist(2, 1, 2, q, g, out);
    CHECK(out[0] == 25.0);
    CHECK(out[1] == 13.0);
  }

  TEST_CASE("knn ties resolve to the lower gallery index") {
    // query 0 is equidistant from gallery 1 (label 7) and gallery 2 (label 9)
    const std::vector<double> dist{5.0, 1.0, 1.0};
    const std::vector<std::uint32_t> ql{9}, gl{9, 7, 9};
    std::vector<std::uint8_t> hit(1);
    kernels::knn_label_hits(1, 3, dist, ql, gl, 1, false, hit);
    CHECK(hit[0] == 0);
    kernels::knn_label_hits(1, 3, dist, ql, gl, 2, false, hit);
    CHECK(hit[0] == 1);
  }

  TEST_CASE("knn skips the query itself when asked") {
    const std::vector<double> dist{0.0, 2.0, 0.0, 2.0};
    const std::vector<std::uint32_t> labels{1, 2};
    std::vector<std::uint8_t> hit(2);
    kernels::knn_label_hits(2, 2, dist, labels, labels, 1, true, hit);
    CHECK(hit[0] == 0);
    CHECK(hit[1] == 0);
    kernels::knn_label_hits(2, 2, dist, labels, labels, 1, false, hit);
    CHECK(hit[0] == 1);
  }

  TEST_CASE("pairwise_sum matches a long-double sum") {
    Rng rng(9);
    const auto v = random_vector(1001, rng);
    long double ref = 0.0L;
    for (double x : v) ref += x;
    CHECK(std::abs(kernels::pairwise_sum(v) - static_cast<double>(ref)) < 1e-12);
    CHECK(kernels::pairwise_sum(std::vector<double>{}) == 0.0);
  }

  TEST_CASE("thread count setter") {
    ThreadScope threads(3);
    CHECK(kernels::num_threads() == 3);
  }
}
