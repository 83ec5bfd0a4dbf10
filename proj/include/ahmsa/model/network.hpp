#pragma once

#include <span>
#include <vector>

#include "ahmsa/model/params.hpp"
#include "ahmsa/optflow/feature_map.hpp"

namespace ahmsa::model {

/// Stacks channel-last feature maps into a [B, 3, h_flow, w_flow] tensor.
/// Throws ValidationError on an empty batch or a size mismatch.
template <typename T>
BasicTensor<T> make_input_batch(std::span<const optflow::FlowFeatureMap> maps,
                                 const ModelConfig& config);

/// P x P convolution with stride P: [B, 3, h_flow, w_flow] -> [B, C, h/P, w/P].
template <typename T>
BasicTensor<T> patch_embed(const BasicTensor<T>& input, const ModelParams<T>& params);

/// Per-channel gating by sigmoid(MLP(avgpool) + MLP(maxpool)), MLP shared.
template <typename T>
BasicTensor<T> channel_attention(const BasicTensor<T>& x, const BlockParams<T>& p);

/// Multi-head scaled dot-product attention over the H*W grid positions.
/// When `attention` is non-null it receives the detached [B, heads, N, N] weights.
template <typename T>
BasicTensor<T> spatial_attention(const BasicTensor<T>& x, const BlockParams<T>& p,
                                 std::size_t heads, BasicTensor<T>* attention = nullptr);

template <typename T>
BasicTensor<T> feed_forward(const BasicTensor<T>& x, const BlockParams<T>& p);

/// Pre-norm residual block: channel attention, spatial attention, feed-forward.
template <typename T>
BasicTensor<T> msa_block(const BasicTensor<T>& x, const BlockParams<T>& p, std::size_t heads);

/// 3x3 conv, channel layer norm, adaptive max pool to (H/factor, W/factor).
template <typename T>
BasicTensor<T> downsample(const BasicTensor<T>& x, const TransitionParams<T>& p,
                          std::size_t factor);

struct ForwardTrace {
  std::vector<Shape> shapes;  // input, after embed, after each level, logits
  std::size_t blocks_executed = 0;
};

/// Full network: [B, 3, h_flow, w_flow] -> logits [B, n_classes].
template <typename T>
BasicTensor<T> forward(const BasicTensor<T>& input, const ModelParams<T>& params,
                       ForwardTrace* trace = nullptr);

template <typename T>
BasicTensor<T> forward(std::span<const optflow::FlowFeatureMap> maps,
                       const ModelParams<T>& params, ForwardTrace* trace = nullptr);

}  // namespace ahmsa::model
