#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ahmsa/model/params.hpp"

namespace ahmsa::model {

/// Checkpoint layout: "AHMC", u8 version, u32 little-endian JSON length, the
/// ModelConfig as JSON, then every parameter in `parameters()` order as
/// little-endian f32.
inline constexpr std::uint8_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ModelParams<float>& params);
/// Throws IoError on a malformed buffer and ConfigError on an invalid config.
ModelParams<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params);
ModelParams<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace ahmsa::model
