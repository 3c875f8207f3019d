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

#include "sslvit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "sslvit/errors.hpp"

namespace sslvit {
namespace {

double central(const std::function<double()>& f, Tensor& t, std::size_t i, double eps) {
  auto d = t.mutable_data();
  const double saved = d[i];
  d[i] = saved + eps;
  const double plus = f();
  d[i] = saved - eps;
  const double minus = f();
  d[i] = saved;
  return (plus - minus) / (2.0 * eps);
}

}  // namespace

std::vector<std::vector<double>> finite_difference(const std::function<double()>& f,
                                                   std::span<Tensor> params, double eps) {
  if (!(eps > 0.0)) throw DomainError("finite_difference: eps must be positive");
  NoGradGuard guard;
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (Tensor& t : params) {
    std::vector<double> g(t.numel());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = central(f, t, i, eps);
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<double> finite_difference_at(const std::function<double()>& f,
                                         std::span<Tensor> params,
                                         std::span<const Coordinate> coords, double eps) {
  if (!(eps > 0.0)) throw DomainError("finite_difference: eps must be positive");
  NoGradGuard guard;
  std::vector<double> out;
  out.reserve(coords.size());
  for (const Coordinate& c : coords) {
    if (c.tensor >= params.size() || c.index >= params[c.tensor].numel())
      throw InvalidArgument("finite_difference_at: coordinate out of range");
    out.push_back(central(f, params[c.tensor], c.index, eps));
  }
  return out;
}

double relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  if (a.size() != b.size()) throw ShapeError("relative_error: length mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

}  // namespace sslvit
