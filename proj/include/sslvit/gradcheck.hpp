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
#include <functional>
#include <span>
#include <vector>

#include "sslvit/tensor.hpp"

namespace sslvit {

/// Central-difference gradient of a scalar function of `params`:
/// (f(p + eps e_i) - f(p - eps e_i)) / (2 eps) for every coordinate of every
/// tensor. `f` is evaluated with graph recording disabled, and each
/// parameter is restored exactly after perturbation.
std::vector<std::vector<double>> finite_difference(const std::function<double()>& f,
                                                   std::span<Tensor> params, double eps);

/// One (tensor, element) coordinate.
struct Coordinate {
  std::size_t tensor = 0;
  std::size_t index = 0;
};

/// Central differences restricted to the listed coordinates.
std::vector<double> finite_difference_at(const std::function<double()>& f,
                                         std::span<Tensor> params,
                                         std::span<const Coordinate> coords, double eps);

/// ||a - b||_2 / max(||a||_2, ||b||_2, floor).
double relative_error(std::span<const double> a, std::span<const double> b,
                      double floor = 1e-12);

}  // namespace sslvit
