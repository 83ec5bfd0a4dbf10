#include "ahmsa/model/params.hpp"

#include <cmath>

#include "ahmsa/errors.hpp"

namespace ahmsa::model {

namespace {

// SplitMix64 + 53-bit mantissa draw: identical streams for float and double models.
class UniformSource {
 public:
  explicit UniformSource(std::uint64_t seed) : state_(seed) {}

  double next_unit() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return static_cast<double>(z >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

template <typename T>
BasicTensor<T> xavier(UniformSource& rng, Shape shape, std::size_t fan_in, std::size_t fan_out) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> data(shape_numel(shape));
  for (T& w : data) w = static_cast<T>(a * (2.0 * rng.next_unit() - 1.0));
  return BasicTensor<T>::from_data(std::move(shape), std::move(data), true);
}

// Weight of a conv kernel [cout, cin, k, k].
template <typename T>
BasicTensor<T> conv_weight(UniformSource& rng, std::size_t cout, std::size_t cin, std::size_t k) {
  return xavier<T>(rng, {cout, cin, k, k}, cin * k * k, cout * k * k);
}

template <typename T>
BasicTensor<T> zero_bias(std::size_t n) {
  return BasicTensor<T>::zeros({n}, true);
}

template <typename T, typename Params, typename Fn>
void visit(Params& p, Fn&& fn) {
  fn(p.embed_w);
  fn(p.embed_b);
  for (std::size_t l = 0; l < p.levels.size(); ++l) {
    for (auto& b : p.levels[l]) {
      fn(b.norm_channel.gamma);
      fn(b.norm_channel.beta);
      fn(b.ca_reduce_w);
      fn(b.ca_reduce_b);
      fn(b.ca_expand_w);
      fn(b.ca_expand_b);
      fn(b.norm_spatial.gamma);
      fn(b.norm_spatial.beta);
      fn(b.q_w);
      fn(b.q_b);
      fn(b.k_w);
      fn(b.k_b);
      fn(b.v_w);
      fn(b.v_b);
      fn(b.out_w);
      fn(b.out_b);
      fn(b.norm_ffn.gamma);
      fn(b.norm_ffn.beta);
      fn(b.ffn_in_w);
      fn(b.ffn_in_b);
      fn(b.ffn_out_w);
      fn(b.ffn_out_b);
    }
    if (l < p.transitions.size()) {
      auto& t = p.transitions[l];
      fn(t.conv_w);
      fn(t.conv_b);
      fn(t.norm.gamma);
      fn(t.norm.beta);
    }
  }
  fn(p.head_w);
  fn(p.head_b);
}

}  // namespace

template <typename T>
std::vector<BasicTensor<T>*> ModelParams<T>::parameters() {
  std::vector<BasicTensor<T>*> out;
  visit<T>(*this, [&](BasicTensor<T>& t) { out.push_back(&t); });
  return out;
}

template <typename T>
std::vector<const BasicTensor<T>*> ModelParams<T>::parameters() const {
  std::vector<const BasicTensor<T>*> out;
  visit<T>(*this, [&](const BasicTensor<T>& t) { out.push_back(&t); });
  return out;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->numel();
  return n;
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out = init_model<U>(config, 0);
  const auto src = parameters();
  const auto dst = out.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto s = src[i]->data();
    auto d = dst[i]->mutable_data();
    for (std::size_t j = 0; j < s.size(); ++j) d[j] = static_cast<U>(s[j]);
  }
  return out;
}

template <typename T>
ModelParams<T> ModelParams<T>::clone() const {
  return cast<T>();
}

template <typename T>
ModelParams<T> init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  UniformSource rng(seed);
  const std::size_t C = config.embed_channels, P = config.patch_size;
  const std::size_t hidden = config.channel_hidden(), wide = config.ffn_expansion * C;

  ModelParams<T> p;
  p.config = config;
  p.embed_w = conv_weight<T>(rng, C, 3, P);
  p.embed_b = zero_bias<T>(C);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    std::vector<BlockParams<T>> blocks;
    for (std::size_t b = 0; b < config.blocks_per_layer[l]; ++b) {
      BlockParams<T> blk;
      blk.norm_channel = ops::LayerNormParams<T>::identity(C);
      blk.ca_reduce_w = conv_weight<T>(rng, hidden, C, 1);
      blk.ca_reduce_b = zero_bias<T>(hidden);
      blk.ca_expand_w = conv_weight<T>(rng, C, hidden, 1);
      blk.ca_expand_b = zero_bias<T>(C);
      blk.norm_spatial = ops::LayerNormParams<T>::identity(C);
      blk.q_w = conv_weight<T>(rng, C, C, 1);
      blk.q_b = zero_bias<T>(C);
      blk.k_w = conv_weight<T>(rng, C, C, 1);
      blk.k_b = zero_bias<T>(C);
      blk.v_w = conv_weight<T>(rng, C, C, 1);
      blk.v_b = zero_bias<T>(C);
      blk.out_w = conv_weight<T>(rng, C, C, 1);
      blk.out_b = zero_bias<T>(C);
      blk.norm_ffn = ops::LayerNormParams<T>::identity(C);
      blk.ffn_in_w = conv_weight<T>(rng, wide, C, 1);
      blk.ffn_in_b = zero_bias<T>(wide);
      blk.ffn_out_w = conv_weight<T>(rng, C, wide, 1);
      blk.ffn_out_b = zero_bias<T>(C);
      blocks.push_back(std::move(blk));
    }
    p.levels.push_back(std::move(blocks));
    if (l + 1 < config.n_layers) {
      TransitionParams<T> t;
      t.conv_w = conv_weight<T>(rng, C, C, 3);
      t.conv_b = zero_bias<T>(C);
      t.norm = ops::LayerNormParams<T>::identity(C);
      p.transitions.push_back(std::move(t));
    }
  }
  const std::size_t top = config.n_layers - 1;
  const std::size_t features = C * config.grid_height(top) * config.grid_width(top);
  p.head_w = xavier<T>(rng, {features, config.n_classes}, features, config.n_classes);
  p.head_b = BasicTensor<T>::zeros({1, config.n_classes}, true);
  return p;
}

std::size_t expected_parameter_count(const ModelConfig& c) {
  c.validate();
  const std::size_t C = c.embed_channels, P = c.patch_size, h = c.channel_hidden(),
                    E = c.ffn_expansion * C;
  const std::size_t block = 3 * 2 * C               // three layer norms
                            + h * C + h + C * h + C  // channel attention
                            + 4 * (C * C + C)        // q, k, v, out
                            + E * C + E + C * E + C;  // feed-forward
  const std::size_t transition = C * C * 9 + C + 2 * C;
  const std::size_t top = c.n_layers - 1;
  const std::size_t features = C * c.grid_height(top) * c.grid_width(top);
  return C * 3 * P * P + C + block * c.total_blocks() + transition * (c.n_layers - 1) +
         features * c.n_classes + c.n_classes;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<float> init_model<float>(const ModelConfig&, std::uint64_t);
template ModelParams<double> init_model<double>(const ModelConfig&, std::uint64_t);
template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;

}  // namespace ahmsa::model
