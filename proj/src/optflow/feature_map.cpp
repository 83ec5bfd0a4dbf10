#include "ahmsa/optflow/feature_map.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ahmsa/errors.hpp"

namespace ahmsa::optflow {

Normalization parse_normalization(const std::string& name) {
  if (name == "standardize") return Normalization::kStandardize;
  if (name == "none") return Normalization::kNone;
  throw ValidationError("unknown normalization '" + name + "' (expected standardize|none)");
}

std::string to_string(Normalization mode) {
  return mode == Normalization::kStandardize ? "standardize" : "none";
}

FlowFeatureMap stack_channels(const FlowField& flow, const StrainMap& strain) {
  if (flow.height != strain.height || flow.width != strain.width) {
    throw ValidationError("stack_channels: flow is " + std::to_string(flow.height) + "x" +
                          std::to_string(flow.width) + " but strain is " +
                          std::to_string(strain.height) + "x" + std::to_string(strain.width));
  }
  FlowFeatureMap map(flow.height, flow.width);
  for (std::size_t i = 0; i < flow.height * flow.width; ++i) {
    map.values[i * 3 + 0] = flow.u[i];
    map.values[i * 3 + 1] = flow.v[i];
    map.values[i * 3 + 2] = strain.os[i];
  }
  return map;
}

FlowFeatureMap resize_bilinear(const FlowFeatureMap& map, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0 || map.height == 0 || map.width == 0) {
    throw ValidationError("resize_bilinear: zero-sized map");
  }
  FlowFeatureMap out(height, width);
  const float sy = static_cast<float>(map.height) / static_cast<float>(height);
  const float sx = static_cast<float>(map.width) / static_cast<float>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const float fy = std::clamp((static_cast<float>(y) + 0.5f) * sy - 0.5f, 0.0f,
                                static_cast<float>(map.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, map.height - 1);
    const float ty = fy - static_cast<float>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const float fx = std::clamp((static_cast<float>(x) + 0.5f) * sx - 0.5f, 0.0f,
                                  static_cast<float>(map.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, map.width - 1);
      const float tx = fx - static_cast<float>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const float top = map.at(y0, x0, c) * (1 - tx) + map.at(y0, x1, c) * tx;
        const float bottom = map.at(y1, x0, c) * (1 - tx) + map.at(y1, x1, c) * tx;
        out.at(y, x, c) = top * (1 - ty) + bottom * ty;
      }
    }
  }
  return out;
}

void normalize_channels(FlowFeatureMap& map, Normalization mode) {
  if (mode == Normalization::kNone) return;
  const std::size_t n = map.height * map.width;
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += map.values[i * 3 + c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = map.values[i * 3 + c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    if (var <= 1e-12) {
      for (std::size_t i = 0; i < n; ++i) map.values[i * 3 + c] = 0.0f;
      continue;
    }
    const double inv = 1.0 / std::sqrt(var);
    for (std::size_t i = 0; i < n; ++i) {
      map.values[i * 3 + c] = static_cast<float>((map.values[i * 3 + c] - mean) * inv);
    }
  }
}

FlowFeatureMap assemble_flow_map(const FlowField& flow, const StrainMap& strain,
                                 Normalization mode, std::size_t height, std::size_t width) {
  FlowFeatureMap map = resize_bilinear(stack_channels(flow, strain), height, width);
  normalize_channels(map, mode);
  return map;
}

namespace {

FlowFeatureMap crop(const FlowFeatureMap& map, const Point& centre, int size) {
  const int max_x = static_cast<int>(map.width) - size;
  const int max_y = static_cast<int>(map.height) - size;
  const int x0 = std::clamp(centre.x - size / 2, 0, max_x);
  const int y0 = std::clamp(centre.y - size / 2, 0, max_y);
  FlowFeatureMap out(static_cast<std::size_t>(size), static_cast<std::size_t>(size));
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        out.at(y, x, c) = map.at(static_cast<std::size_t>(y0 + y), static_cast<std::size_t>(x0 + x), c);
      }
    }
  }
  return out;
}

void check_landmark(const FlowFeatureMap& map, const Point& p, const char* name) {
  if (p.x < 0 || p.y < 0 || static_cast<std::size_t>(p.x) >= map.width ||
      static_cast<std::size_t>(p.y) >= map.height) {
    throw ValidationError(std::string("landmark ") + name + " (" + std::to_string(p.x) + ", " +
                          std::to_string(p.y) + ") lies outside the " +
                          std::to_string(map.width) + "x" + std::to_string(map.height) + " map");
  }
}

}  // namespace

FlowFeatureMap compose_regions(const FlowFeatureMap& full_map, const LandmarkSet& landmarks,
                               const RegionOptions& options) {
  if (options.region_px < 1) throw ValidationError("compose_regions: region_px must be >= 1");
  if (options.out_height < 2 || options.out_width < 2 || options.out_height % 2 != 0 ||
      options.out_width % 2 != 0) {
    throw ValidationError("compose_regions: output dims must be even and >= 2");
  }
  const auto side = static_cast<std::size_t>(options.region_px);
  if (full_map.height < side || full_map.width < side) {
    throw ValidationError("compose_regions: map " + std::to_string(full_map.height) + "x" +
                          std::to_string(full_map.width) + " is smaller than region_px " +
                          std::to_string(options.region_px));
  }
  check_landmark(full_map, landmarks.left_eye, "left_eye");
  check_landmark(full_map, landmarks.right_eye, "right_eye");
  check_landmark(full_map, landmarks.nose, "nose");
  check_landmark(full_map, landmarks.left_lip, "left_lip");
  check_landmark(full_map, landmarks.right_lip, "right_lip");

  const std::size_t th = options.out_height / 2, tw = options.out_width / 2;
  FlowFeatureMap out(options.out_height, options.out_width);
  const std::array<std::pair<const Point*, std::pair<std::size_t, std::size_t>>, 4> tiles = {{
      {&landmarks.left_eye, {0, 0}},
      {&landmarks.right_eye, {0, tw}},
      {&landmarks.left_lip, {th, 0}},
      {&landmarks.right_lip, {th, tw}},
  }};
  for (const auto& [point, origin] : tiles) {
    const FlowFeatureMap tile = resize_bilinear(crop(full_map, *point, options.region_px), th, tw);
    for (std::size_t y = 0; y < th; ++y) {
      for (std::size_t x = 0; x < tw; ++x) {
        for (std::size_t c = 0; c < 3; ++c) out.at(origin.first + y, origin.second + x, c) = tile.at(y, x, c);
      }
    }
  }
  if (options.include_nose) {
    const FlowFeatureMap nose =
        resize_bilinear(crop(full_map, landmarks.nose, options.region_px), th, tw);
    const std::size_t oy = th / 2, ox = tw / 2;
    for (std::size_t y = 0; y < th; ++y) {
      for (std::size_t x = 0; x < tw; ++x) {
        for (std::size_t c = 0; c < 3; ++c) {
          float& dst = out.at(oy + y, ox + x, c);
          dst = 0.5f * dst + 0.5f * nose.at(y, x, c);
        }
      }
    }
  }
  return out;
}

FlowFeatureMap extract_features(const GrayImage& onset, const GrayImage& apex,
                                const LandmarkSet& landmarks, const FeatureConfig& config) {
  const FlowField flow = tvl1_flow(onset, apex, config.tvl1);
  const StrainMap strain = optical_strain(flow);
  FlowFeatureMap map = compose_regions(stack_channels(flow, strain), landmarks, config.regions);
  normalize_channels(map, config.normalization);
  return map;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace

std::vector<std::uint8_t> encode_flow_map(const FlowFeatureMap& map) {
  if (map.values.size() != map.height * map.width * 3) {
    throw ValidationError("encode_flow_map: value count does not match dims");
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + map.values.size() * 4);
  out.insert(out.end(), kFlowMagic.begin(), kFlowMagic.end());
  out.push_back(kFlowFormatVersion);
  out.insert(out.end(), 3, 0);
  put_u32(out, static_cast<std::uint32_t>(map.height));
  put_u32(out, static_cast<std::uint32_t>(map.width));
  for (float f : map.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

FlowFeatureMap decode_flow_map(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || !std::equal(kFlowMagic.begin(), kFlowMagic.end(), bytes.begin())) {
    throw IoError("flow map: missing AHMS header");
  }
  if (bytes[4] != kFlowFormatVersion) {
    throw IoError("flow map: unsupported format version " + std::to_string(bytes[4]));
  }
  const std::uint32_t h = get_u32(bytes.data() + 8), w = get_u32(bytes.data() + 12);
  const std::size_t count = static_cast<std::size_t>(h) * w * 3;
  if (h == 0 || w == 0 || bytes.size() != 16 + count * 4) {
    throw IoError("flow map: payload size does not match " + std::to_string(h) + "x" +
                  std::to_string(w) + "x3");
  }
  FlowFeatureMap map(h, w);
  for (std::size_t i = 0; i < count; ++i) {
    map.values[i] = std::bit_cast<float>(get_u32(bytes.data() + 16 + i * 4));
  }
  return map;
}

void write_flow_map(const std::filesystem::path& path, const FlowFeatureMap& map) {
  const auto bytes = encode_flow_map(map);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write flow map " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing flow map " + path.string());
}

FlowFeatureMap read_flow_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open flow map " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_flow_map(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace ahmsa::optflow
