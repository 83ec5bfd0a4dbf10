#include "ahmsa/model/config.hpp"

#include <algorithm>
#include <numeric>

#include "ahmsa/errors.hpp"

namespace ahmsa::model {

std::vector<std::string> ModelConfig::violations() const {
  std::vector<std::string> out;
  auto positive = [&](std::size_t v, const char* name) {
    if (v == 0) out.push_back(std::string(name) + " must be positive");
    return v != 0;
  };
  const bool dims_ok = positive(h_flow, "h_flow") & positive(w_flow, "w_flow") &
                       positive(patch_size, "patch_size");
  positive(embed_channels, "embed_channels");
  positive(heads, "heads");
  positive(n_layers, "n_layers");
  positive(downsample_factor, "downsample_factor");
  positive(channel_reduction, "channel_reduction");
  positive(ffn_expansion, "ffn_expansion");
  if (n_classes < 2) out.emplace_back("n_classes must be >= 2");
  if (heads != 0 && embed_channels % heads != 0) {
    out.push_back("embed_channels (" + std::to_string(embed_channels) +
                  ") must be divisible by heads (" + std::to_string(heads) + ")");
  }
  if (blocks_per_layer.size() != n_layers) {
    out.push_back("blocks_per_layer has " + std::to_string(blocks_per_layer.size()) +
                  " entries but n_layers is " + std::to_string(n_layers));
  }
  if (std::any_of(blocks_per_layer.begin(), blocks_per_layer.end(),
                  [](std::size_t b) { return b == 0; })) {
    out.emplace_back("every blocks_per_layer entry must be positive");
  }
  if (dims_ok) {
    if (h_flow % patch_size != 0 || w_flow % patch_size != 0) {
      out.push_back("h_flow and w_flow must be divisible by patch_size (" +
                    std::to_string(patch_size) + ")");
    } else if (n_layers > 0 && downsample_factor > 0) {
      std::size_t total = 1;
      for (std::size_t i = 1; i < n_layers; ++i) total *= downsample_factor;
      if ((h_flow / patch_size) % total != 0 || (w_flow / patch_size) % total != 0) {
        out.push_back("patch grid " + std::to_string(h_flow / patch_size) + "x" +
                      std::to_string(w_flow / patch_size) +
                      " must be divisible by downsample_factor^(n_layers-1) = " +
                      std::to_string(total));
      }
    }
  }
  return out;
}

void ModelConfig::validate() const {
  const auto bad = violations();
  if (bad.empty()) return;
  std::string msg = "invalid model config:";
  for (const auto& b : bad) msg += "\n  - " + b;
  throw ConfigError(msg);
}

std::size_t ModelConfig::grid_height(std::size_t level) const {
  std::size_t g = h_flow / patch_size;
  for (std::size_t i = 0; i < level; ++i) g /= downsample_factor;
  return g;
}

std::size_t ModelConfig::grid_width(std::size_t level) const {
  std::size_t g = w_flow / patch_size;
  for (std::size_t i = 0; i < level; ++i) g /= downsample_factor;
  return g;
}

std::size_t ModelConfig::channel_hidden() const {
  return std::max<std::size_t>(1, embed_channels / channel_reduction);
}

std::size_t ModelConfig::total_blocks() const {
  return std::accumulate(blocks_per_layer.begin(), blocks_per_layer.end(), std::size_t{0});
}

nlohmann::ordered_json to_json(const ModelConfig& c) {
  return {{"h_flow", c.h_flow},
          {"w_flow", c.w_flow},
          {"patch_size", c.patch_size},
          {"embed_channels", c.embed_channels},
          {"heads", c.heads},
          {"n_layers", c.n_layers},
          {"downsample_factor", c.downsample_factor},
          {"blocks_per_layer", c.blocks_per_layer},
          {"n_classes", c.n_classes},
          {"channel_reduction", c.channel_reduction},
          {"ffn_expansion", c.ffn_expansion}};
}

ModelConfig model_config_from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "h_flow") c.h_flow = value.get<std::size_t>();
      else if (key == "w_flow") c.w_flow = value.get<std::size_t>();
      else if (key == "patch_size") c.patch_size = value.get<std::size_t>();
      else if (key == "embed_channels") c.embed_channels = value.get<std::size_t>();
      else if (key == "heads") c.heads = value.get<std::size_t>();
      else if (key == "n_layers") c.n_layers = value.get<std::size_t>();
      else if (key == "downsample_factor") c.downsample_factor = value.get<std::size_t>();
      else if (key == "blocks_per_layer") c.blocks_per_layer = value.get<std::vector<std::size_t>>();
      else if (key == "n_classes") c.n_classes = value.get<std::size_t>();
      else if (key == "channel_reduction") c.channel_reduction = value.get<std::size_t>();
      else if (key == "ffn_expansion") c.ffn_expansion = value.get<std::size_t>();
      else throw ConfigError("unknown model config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("model config key '" + key + "': " + e.what());
    }
  }
  return c;
}

}  // namespace ahmsa::model
