// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the unit tests: seeded tensors and a central
// finite-difference gradient checker in double precision.

#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "obiformer/autograd.hpp"
#include "obiformer/ops.hpp"

namespace obiformer::testing {

template <class T = double>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, T lo = T(-1), T hi = T(1)) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<T> dist(lo, hi);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

/// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over every
/// element of every input, for loss = mse(f(inputs), target).
inline double max_gradient_error(const std::function<Var<double>(const std::vector<Var<double>>&)>& f,
                                 std::vector<Tensor<double>> inputs, std::uint64_t seed = 99,
                                 double step = 1e-5, double floor = 1e-6) {
  auto loss_of = [&](const std::vector<Tensor<double>>& values, bool track, std::vector<Var<double>>* vars_out) {
    std::vector<Var<double>> vars;
    for (const auto& v : values) vars.push_back(track ? leaf(v) : constant(v));
    auto out = f(vars);
    auto target = constant(random_tensor<double>(out->value.shape(), seed));
    auto loss = ops::mse(out, target);
    if (vars_out) *vars_out = vars;
    return loss;
  };
  std::vector<Var<double>> vars;
  auto loss = loss_of(inputs, true, &vars);
  backward(loss);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k][i];
      inputs[k][i] = orig + step;
      const double up = loss_of(inputs, false, nullptr)->value[0];
      inputs[k][i] = orig - step;
      const double down = loss_of(inputs, false, nullptr)->value[0];
      inputs[k][i] = orig;
      const double numeric = (up - down) / (2 * step);
      const double analytic = vars[k]->grad.size() ? vars[k]->grad[i] : 0.0;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace obiformer::testing
