#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

namespace ahmsa::model {

/// Architecture knobs. Defaults: 28x28 input, 7x7 patches, 3 heads, 3 levels,
/// factor 2, blocks (2,2,8). embed_channels, channel_reduction and
/// ffn_expansion are local choices.
struct ModelConfig {
  std::size_t h_flow = 28;
  std::size_t w_flow = 28;
  std::size_t patch_size = 7;
  std::size_t embed_channels = 96;
  std::size_t heads = 3;
  std::size_t n_layers = 3;
  std::size_t downsample_factor = 2;
  std::vector<std::size_t> blocks_per_layer = {2, 2, 8};
  std::size_t n_classes = 3;
  std::size_t channel_reduction = 4;
  std::size_t ffn_expansion = 4;

  std::vector<std::string> violations() const;
  /// Throws ConfigError listing every violated invariant.
  void validate() const;

  /// Patch-grid height/width at hierarchy level `level`.
  std::size_t grid_height(std::size_t level) const;
  std::size_t grid_width(std::size_t level) const;
  std::size_t head_dim() const { return embed_channels / heads; }
  std::size_t channel_hidden() const;
  std::size_t total_blocks() const;

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::ordered_json to_json(const ModelConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::ordered_json& j);

}  // namespace ahmsa::model
