#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ahmsa/tensor/tensor.hpp"

namespace ahmsa {

template <typename T>
struct AdamState {
  std::uint64_t step_count = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  /// Zeroed moment buffers shaped like `params`. lr may be 0 (a no-op step);
  /// throws ConfigError for negative lr or betas outside [0, 1).
  static AdamState for_params(std::span<BasicTensor<T>* const> params, double lr,
                              double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
};

/// One bias-corrected Adam update of every parameter from its grad buffer.
/// Grads are left untouched; the caller zeroes them.
template <typename T>
void adam_step(std::span<BasicTensor<T>* const> params, AdamState<T>& state);

extern template struct AdamState<float>;
extern template struct AdamState<double>;

}  // namespace ahmsa
