#include "ahmsa/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ahmsa/errors.hpp"

namespace ahmsa::model {

namespace {

constexpr char kMagic[4] = {'A', 'H', 'M', 'C'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
         std::uint32_t{p[3]} << 24;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelParams<float>& params) {
  const std::string json = to_json(params.config).dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.push_back(kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(json.size()));
  out.insert(out.end(), json.begin(), json.end());
  for (const auto* p : params.parameters()) {
    for (float v : p->data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

ModelParams<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 9 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IoError("not a model checkpoint (bad magic)");
  }
  if (bytes[4] != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(bytes[4]));
  }
  const std::size_t json_len = get_u32(bytes.data() + 5);
  if (bytes.size() < 9 + json_len) throw IoError("checkpoint truncated in config header");
  ModelConfig config;
  try {
    config = model_config_from_json(nlohmann::ordered_json::parse(
        bytes.begin() + 9, bytes.begin() + 9 + static_cast<std::ptrdiff_t>(json_len)));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  auto params = init_model<float>(config, 0);
  const std::size_t expected = 9 + json_len + 4 * params.parameter_count();
  if (bytes.size() != expected) {
    throw IoError("checkpoint has " + std::to_string(bytes.size()) + " bytes, expected " +
                  std::to_string(expected));
  }
  const std::uint8_t* cursor = bytes.data() + 9 + json_len;
  for (auto* p : params.parameters()) {
    for (float& v : p->mutable_data()) {
      v = std::bit_cast<float>(get_u32(cursor));
      cursor += 4;
    }
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace ahmsa::model
