#pragma once

// Central finite-difference oracle used by the gradient tests. Independent of
// the backward closures: it only ever calls forward ops and reads .item().

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "ahmsa/tensor/tensor.hpp"

namespace ahmsa::testing {

inline TensorD random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0,
                             double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = dist(rng);
  return TensorD::from_data(std::move(shape), std::move(data), true);
}

/// Relative error with an absolute floor so that near-zero gradients are judged
/// by absolute agreement instead of blowing up the ratio.
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Compares backward() against central differences for every element of
/// every tensor in `inputs`. `loss` must rebuild the graph from the inputs on
/// each call and return a scalar.
inline GradCheckResult grad_check(std::vector<TensorD*> inputs,
                                  const std::function<TensorD()>& loss, double step = 1e-3,
                                  double floor = 1e-3) {
  for (TensorD* t : inputs) {
    t->set_requires_grad(true);
    t->zero_grad();
  }
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (TensorD* t : inputs) analytic.emplace_back(t->grad().begin(), t->grad().end());

  GradCheckResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto data = inputs[i]->mutable_data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double saved = data[j];
      data[j] = saved + step;
      const double plus = loss().item();
      data[j] = saved - step;
      const double minus = loss().item();
      data[j] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      result.max_rel_error =
          std::max(result.max_rel_error, relative_error(analytic[i][j], numeric, floor));
      ++result.checked;
    }
  }
  return result;
}

}  // namespace ahmsa::testing
