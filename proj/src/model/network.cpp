#include "ahmsa/model/network.hpp"

#include <cmath>

#include "ahmsa/errors.hpp"

namespace ahmsa::model {

namespace {

template <typename T>
BasicTensor<T> pointwise(const BasicTensor<T>& x, const BasicTensor<T>& w,
                         const BasicTensor<T>& b) {
  return ops::conv2d(x, w, b);
}

}  // namespace

template <typename T>
BasicTensor<T> make_input_batch(std::span<const optflow::FlowFeatureMap> maps,
                                const ModelConfig& config) {
  if (maps.empty()) throw ValidationError("input batch is empty");
  const std::size_t H = config.h_flow, W = config.w_flow, plane = H * W;
  std::vector<T> data(maps.size() * 3 * plane);
  for (std::size_t b = 0; b < maps.size(); ++b) {
    const auto& m = maps[b];
    if (m.height != H || m.width != W || m.values.size() != plane * 3) {
      throw ValidationError("feature map " + std::to_string(b) + " is " +
                            std::to_string(m.height) + "x" + std::to_string(m.width) +
                            ", model expects " + std::to_string(H) + "x" + std::to_string(W));
    }
    T* dst = data.data() + b * 3 * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      for (std::size_t c = 0; c < 3; ++c) dst[c * plane + i] = static_cast<T>(m.values[i * 3 + c]);
    }
  }
  return BasicTensor<T>::from_data({maps.size(), 3, H, W}, std::move(data));
}

template <typename T>
BasicTensor<T> patch_embed(const BasicTensor<T>& input, const ModelParams<T>& params) {
  const auto& c = params.config;
  if (input.rank() != 4 || input.dim(0) == 0 || input.dim(1) != 3 || input.dim(2) != c.h_flow ||
      input.dim(3) != c.w_flow) {
    throw ValidationError("patch_embed expects [B>0, 3, " + std::to_string(c.h_flow) + ", " +
                          std::to_string(c.w_flow) + "], got " + shape_to_string(input.shape()));
  }
  return ops::conv2d(input, params.embed_w, params.embed_b, c.patch_size, 0);
}

template <typename T>
BasicTensor<T> channel_attention(const BasicTensor<T>& x, const BlockParams<T>& p) {
  auto mlp = [&](const BasicTensor<T>& pooled) {
    auto h = ops::relu(pointwise(pooled, p.ca_reduce_w, p.ca_reduce_b));
    return pointwise(h, p.ca_expand_w, p.ca_expand_b);
  };
  const auto avg = mlp(ops::adaptive_pool(x, 1, 1, ops::PoolMode::kAvg));
  const auto max = mlp(ops::adaptive_pool(x, 1, 1, ops::PoolMode::kMax));
  return ops::mul(x, ops::sigmoid(ops::add(avg, max)));
}

template <typename T>
BasicTensor<T> spatial_attention(const BasicTensor<T>& x, const BlockParams<T>& p,
                                 std::size_t heads, BasicTensor<T>* attention) {
  if (x.rank() != 4) throw DimensionError("spatial_attention expects [B, C, H, W]");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), N = H * W;
  if (heads == 0 || C % heads != 0) {
    throw ConfigError("channels (" + std::to_string(C) + ") not divisible by heads (" +
                      std::to_string(heads) + ")");
  }
  const std::size_t D = C / heads;
  const Shape split = {B, heads, D, N};
  auto q = ops::transpose_last2(ops::reshape(pointwise(x, p.q_w, p.q_b), split));  // [B,h,N,D]
  auto kt = ops::reshape(pointwise(x, p.k_w, p.k_b), split);                       // [B,h,D,N]
  auto v = ops::transpose_last2(ops::reshape(pointwise(x, p.v_w, p.v_b), split));  // [B,h,N,D]
  const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(D)));
  auto weights = ops::softmax(ops::scale(ops::matmul(q, kt), inv_sqrt_d), 3);
  if (attention != nullptr) *attention = weights.detach();
  auto z = ops::transpose_last2(ops::matmul(weights, v));  // [B,h,D,N]
  return pointwise(ops::reshape(z, {B, C, H, W}), p.out_w, p.out_b);
}

template <typename T>
BasicTensor<T> feed_forward(const BasicTensor<T>& x, const BlockParams<T>& p) {
  return pointwise(ops::relu(pointwise(x, p.ffn_in_w, p.ffn_in_b)), p.ffn_out_w, p.ffn_out_b);
}

template <typename T>
BasicTensor<T> msa_block(const BasicTensor<T>& x, const BlockParams<T>& p, std::size_t heads) {
  auto x1 = ops::add(x, channel_attention(ops::layer_norm(x, p.norm_channel, 1), p));
  auto x2 = ops::add(x1, spatial_attention(ops::layer_norm(x1, p.norm_spatial, 1), p, heads));
  return ops::add(x2, feed_forward(ops::layer_norm(x2, p.norm_ffn, 1), p));
}

template <typename T>
BasicTensor<T> downsample(const BasicTensor<T>& x, const TransitionParams<T>& p,
                          std::size_t factor) {
  if (x.rank() != 4) throw DimensionError("downsample expects [B, C, H, W]");
  const std::size_t H = x.dim(2), W = x.dim(3);
  if (factor == 0 || H % factor != 0 || W % factor != 0) {
    throw ConfigError("grid " + std::to_string(H) + "x" + std::to_string(W) +
                      " is not divisible by downsample factor " + std::to_string(factor));
  }
  auto y = ops::layer_norm(ops::conv2d(x, p.conv_w, p.conv_b, 1, 1), p.norm, 1);
  return ops::adaptive_pool(y, H / factor, W / factor, ops::PoolMode::kMax);
}

template <typename T>
BasicTensor<T> forward(const BasicTensor<T>& input, const ModelParams<T>& params,
                       ForwardTrace* trace) {
  const auto& c = params.config;
  if (trace != nullptr) *trace = ForwardTrace{};
  auto record = [&](const BasicTensor<T>& t) {
    if (trace != nullptr) trace->shapes.push_back(t.shape());
  };
  record(input);
  auto x = patch_embed(input, params);
  record(x);
  for (std::size_t l = 0; l < params.levels.size(); ++l) {
    for (const auto& block : params.levels[l]) {
      x = msa_block(x, block, c.heads);
      if (trace != nullptr) ++trace->blocks_executed;
    }
    if (l < params.transitions.size()) {
      x = downsample(x, params.transitions[l], c.downsample_factor);
      record(x);
    }
  }
  const std::size_t B = x.dim(0);
  auto logits = ops::add(ops::matmul(ops::reshape(x, {B, x.numel() / B}), params.head_w),
                         params.head_b);
  record(logits);
  return logits;
}

template <typename T>
BasicTensor<T> forward(std::span<const optflow::FlowFeatureMap> maps,
                       const ModelParams<T>& params, ForwardTrace* trace) {
  return forward(make_input_batch<T>(maps, params.config), params, trace);
}

#define AHMSA_INSTANTIATE_NETWORK(T)                                                        \
  template BasicTensor<T> make_input_batch<T>(std::span<const optflow::FlowFeatureMap>,    \
                                              const ModelConfig&);                         \
  template BasicTensor<T> patch_embed<T>(const BasicTensor<T>&, const ModelParams<T>&);     \
  template BasicTensor<T> channel_attention<T>(const BasicTensor<T>&, const BlockParams<T>&); \
  template BasicTensor<T> spatial_attention<T>(const BasicTensor<T>&, const BlockParams<T>&, \
                                               std::size_t, BasicTensor<T>*);              \
  template BasicTensor<T> feed_forward<T>(const BasicTensor<T>&, const BlockParams<T>&);    \
  template BasicTensor<T> msa_block<T>(const BasicTensor<T>&, const BlockParams<T>&,        \
                                       std::size_t);                                        \
  template BasicTensor<T> downsample<T>(const BasicTensor<T>&, const TransitionParams<T>&,  \
                                        std::size_t);                                       \
  template BasicTensor<T> forward<T>(const BasicTensor<T>&, const ModelParams<T>&,          \
                                     ForwardTrace*);                                        \
  template BasicTensor<T> forward<T>(std::span<const optflow::FlowFeatureMap>,              \
                                     const ModelParams<T>&, ForwardTrace*);

AHMSA_INSTANTIATE_NETWORK(float)
AHMSA_INSTANTIATE_NETWORK(double)

}  // namespace ahmsa::model
