#include "ahmsa/tensor/adam.hpp"

#include <cmath>
#include <string>

#include "ahmsa/errors.hpp"

namespace ahmsa {

template <typename T>
AdamState<T> AdamState<T>::for_params(std::span<BasicTensor<T>* const> params, double lr,
                                      double beta1, double beta2, double eps) {
  if (!(lr >= 0.0)) throw ConfigError("adam: learning rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam: beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam: beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adam: eps must be positive");
  AdamState state;
  state.lr = lr;
  state.beta1 = beta1;
  state.beta2 = beta2;
  state.eps = eps;
  for (const BasicTensor<T>* p : params) {
    state.m.emplace_back(p->numel(), T(0));
    state.v.emplace_back(p->numel(), T(0));
  }
  return state;
}

template <typename T>
void adam_step(std::span<BasicTensor<T>* const> params, AdamState<T>& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw UsageError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->requires_grad()) {
      throw UsageError("adam_step: parameter " + std::to_string(i) + " has no gradient");
    }
    if (state.m[i].size() != params[i]->numel() || state.v[i].size() != params[i]->numel()) {
      throw UsageError("adam_step: state buffer " + std::to_string(i) +
                       " does not match parameter size");
    }
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  const T step = static_cast<T>(state.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(state.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i]->mutable_data();
    auto g = params[i]->grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      w[j] -= step * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::span<BasicTensor<float>* const>, AdamState<float>&);
template void adam_step(std::span<BasicTensor<double>* const>, AdamState<double>&);

}  // namespace ahmsa
