#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ahmsa/optflow/image.hpp"
#include "ahmsa/optflow/strain.hpp"
#include "ahmsa/optflow/tvl1.hpp"

namespace ahmsa::optflow {

/// Three-channel (u, v, os) map stored channel-last: values[(y * width + x) * 3 + c].
struct FlowFeatureMap {
  static constexpr std::size_t kChannels = 3;

  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;

  FlowFeatureMap() = default;
  FlowFeatureMap(std::size_t h, std::size_t w) : height(h), width(w), values(h * w * kChannels) {}

  float& at(std::size_t y, std::size_t x, std::size_t c) { return values[(y * width + x) * 3 + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return values[(y * width + x) * 3 + c];
  }
};

struct Point {
  int x = 0;
  int y = 0;
};

/// Five facial reference points in apex-frame pixel coordinates.
struct LandmarkSet {
  Point left_eye;
  Point right_eye;
  Point nose;
  Point left_lip;
  Point right_lip;
};

enum class Normalization { kStandardize, kNone };

Normalization parse_normalization(const std::string& name);
std::string to_string(Normalization mode);

/// Stacks (u, v, os) at source resolution without resizing or normalizing.
FlowFeatureMap stack_channels(const FlowField& flow, const StrainMap& strain);

/// Bilinear resize with pixel-centre alignment.
FlowFeatureMap resize_bilinear(const FlowFeatureMap& map, std::size_t height, std::size_t width);

/// Per-channel standardization to mean 0 / variance 1. A channel whose variance
/// is numerically zero becomes all zeros.
void normalize_channels(FlowFeatureMap& map, Normalization mode);

/// stack_channels + resize to (height, width) + normalize_channels.
FlowFeatureMap assemble_flow_map(const FlowField& flow, const StrainMap& strain,
                                 Normalization mode = Normalization::kStandardize,
                                 std::size_t height = 28, std::size_t width = 28);

struct RegionOptions {
  int region_px = 28;
  bool include_nose = false;
  std::size_t out_height = 28;
  std::size_t out_width = 28;
};

/// Crops a region_px square around each landmark (shifted to stay inside the
/// map), resizes each crop to a quarter tile and tiles
///   left_eye  | right_eye
///   left_lip  | right_lip
/// With include_nose, a nose crop is blended at 50% over the centre tile area.
FlowFeatureMap compose_regions(const FlowFeatureMap& full_map, const LandmarkSet& landmarks,
                               const RegionOptions& options = {});

struct FeatureConfig {
  TVL1Params tvl1;
  RegionOptions regions;
  Normalization normalization = Normalization::kStandardize;
};

/// Full extraction: TV-L1 flow, strain, region composite, normalization.
FlowFeatureMap extract_features(const GrayImage& onset, const GrayImage& apex,
                                const LandmarkSet& landmarks, const FeatureConfig& config = {});

// On-disk format: "AHMS", u8 version (1), 3 reserved zero bytes, u32 LE height,
// u32 LE width, then height*width*3 little-endian f32 values, channel-last.
inline constexpr std::array<char, 4> kFlowMagic = {'A', 'H', 'M', 'S'};
inline constexpr std::uint8_t kFlowFormatVersion = 1;

std::vector<std::uint8_t> encode_flow_map(const FlowFeatureMap& map);
FlowFeatureMap decode_flow_map(const std::vector<std::uint8_t>& bytes);
void write_flow_map(const std::filesystem::path& path, const FlowFeatureMap& map);
FlowFeatureMap read_flow_map(const std::filesystem::path& path);

}  // namespace ahmsa::optflow
