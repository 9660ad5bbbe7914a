// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resprune Authors

// Central finite-difference oracle. It only evaluates the forward function,
// so it stays independent of every backward closure it checks.

#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "resprune/autograd.hpp"

namespace resprune::testing {

using LossFn = std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>;

struct GradCheckResult {
  double max_rel_error = 0;  // over inputs, ||analytic - numeric|| / (||analytic|| + ||numeric||)
  std::vector<Tensor<double>> analytic;
  std::vector<Tensor<double>> numeric;
};

inline double evaluate(const LossFn& f, const std::vector<Tensor<double>>& inputs) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return f(tape, vars).value().item();
}

inline GradCheckResult grad_check(const LossFn& f, std::vector<Tensor<double>> inputs, double h = 1e-3) {
  GradCheckResult r;
  std::vector<Parameter<double>> params;
  params.reserve(inputs.size());
  for (const auto& t : inputs) params.emplace_back(t);
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (auto& p : params) vars.push_back(tape.watch(p));
    tape.backward(f(tape, vars));
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor<double> num(inputs[i].shape());
    for (std::size_t k = 0; k < inputs[i].numel(); ++k) {
      const double orig = inputs[i][k];
      inputs[i][k] = orig + h;
      const double up = evaluate(f, inputs);
      inputs[i][k] = orig - h;
      const double down = evaluate(f, inputs);
      inputs[i][k] = orig;
      num[k] = (up - down) / (2 * h);
    }
    double diff = 0, na = 0, nn = 0;
    for (std::size_t k = 0; k < num.numel(); ++k) {
      const double a = params[i].grad[k];
      diff += (a - num[k]) * (a - num[k]);
      na += a * a;
      nn += num[k] * num[k];
    }
    const double denom = std::sqrt(na) + std::sqrt(nn);
    const double rel = denom > 1e-12 ? std::sqrt(diff) / denom : std::sqrt(diff);
    r.max_rel_error = std::max(r.max_rel_error, rel);
    r.analytic.push_back(params[i].grad);
    r.numeric.push_back(std::move(num));
  }
  return r;
}

/// Uniform values in [-1, 1] pushed at least `gap` away from zero, so ReLU
/// kinks stay outside the finite-difference stencil.
inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double gap = 0.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : t.data()) {
    v = u(rng);
    if (std::abs(v) < gap) v = v < 0 ? v - gap : v + gap;
  }
  return t;
}

}  // namespace resprune::testing
