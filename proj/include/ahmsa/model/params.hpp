#pragma once

#include <cstdint>
#include <vector>

#include "ahmsa/model/config.hpp"
#include "ahmsa/tensor/ops.hpp"
#include "ahmsa/tensor/tensor.hpp"

namespace ahmsa::model {

/// Weights of one multi-scale attention block. All convolutions are 1x1.
template <typename T>
struct BlockParams {
  ops::LayerNormParams<T> norm_channel;
  BasicTensor<T> ca_reduce_w, ca_reduce_b;  // [C/r, C, 1, 1]
  BasicTensor<T> ca_expand_w, ca_expand_b;  // [C, C/r, 1, 1]
  ops::LayerNormParams<T> norm_spatial;
  BasicTensor<T> q_w, q_b, k_w, k_b, v_w, v_b, out_w, out_b;  // [C, C, 1, 1]
  ops::LayerNormParams<T> norm_ffn;
  BasicTensor<T> ffn_in_w, ffn_in_b;    // [E*C, C, 1, 1]
  BasicTensor<T> ffn_out_w, ffn_out_b;  // [C, E*C, 1, 1]
};

/// Level-to-level transition: 3x3 conv, channel layer norm, adaptive max pool.
template <typename T>
struct TransitionParams {
  BasicTensor<T> conv_w, conv_b;  // [C, C, 3, 3]
  ops::LayerNormParams<T> norm;
};

template <typename T>
struct ModelParams {
  ModelConfig config;
  BasicTensor<T> embed_w, embed_b;  // [C, 3, P, P]
  std::vector<std::vector<BlockParams<T>>> levels;
  std::vector<TransitionParams<T>> transitions;  // n_layers - 1 entries
  BasicTensor<T> head_w, head_b;                 // [C*top_h*top_w, n_classes], [1, n_classes]

  /// Every learnable tensor in the canonical order used by the optimizer and
  /// the checkpoint format:
  ///   embed_w, embed_b,
  ///   per level, per block: norm_channel.{gamma,beta}, ca_reduce_{w,b},
  ///     ca_expand_{w,b}, norm_spatial.{gamma,beta}, q_{w,b}, k_{w,b}, v_{w,b},
  ///     out_{w,b}, norm_ffn.{gamma,beta}, ffn_in_{w,b}, ffn_out_{w,b};
  ///   then, unless it is the last level, that level's transition:
  ///     conv_{w,b}, norm.{gamma,beta};
  ///   head_w, head_b.
  std::vector<BasicTensor<T>*> parameters();
  std::vector<const BasicTensor<T>*> parameters() const;
  std::size_t parameter_count() const;

  /// Deep copy; the tensors of a plain copy share storage with the original.
  ModelParams clone() const;

  template <typename U>
  ModelParams<U> cast() const;
};

/// Xavier-uniform weights, zero biases, identity layer norms; fully determined
/// by `seed`. Throws ConfigError for an invalid config.
template <typename T>
ModelParams<T> init_model(const ModelConfig& config, std::uint64_t seed);

/// Number of learnable scalars implied by `config`.
std::size_t expected_parameter_count(const ModelConfig& config);

extern template struct ModelParams<float>;
extern template struct ModelParams<double>;

}  // namespace ahmsa::model
