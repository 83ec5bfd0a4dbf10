#include "ahmsa/cli/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <limits>

#include "ahmsa/errors.hpp"

namespace ahmsa::cli {

namespace {

using nlohmann::json;

// Each accepted key knows how to read itself from and write itself to a RunConfig.
// `set` returns an error message, or an empty string on success.
struct Field {
  std::string key;
  std::function<std::string(RunConfig&, const json&)> set;
  std::function<json(const RunConfig&)> get;
};

bool as_size(const json& v, std::size_t& out) {
  if (v.is_number_unsigned()) {
    out = v.get<std::size_t>();
    return true;
  }
  if (v.is_number_integer() && v.get<long long>() >= 0) {
    out = static_cast<std::size_t>(v.get<long long>());
    return true;
  }
  return false;
}

template <typename Access>
Field size_field(std::string key, Access access) {
  return {key,
          [access](RunConfig& c, const json& v) -> std::string {
            std::size_t n = 0;
            if (!as_size(v, n)) return "expected a non-negative integer";
            access(c) = n;
            return {};
          },
          [access](const RunConfig& c) { return json(access(c)); }};
}

template <typename Access>
Field int_field(std::string key, Access access) {
  return {key,
          [access](RunConfig& c, const json& v) -> std::string {
            if (!v.is_number_integer()) return "expected an integer";
            const auto n = v.get<long long>();
            if (n < std::numeric_limits<int>::min() || n > std::numeric_limits<int>::max()) {
              return "integer out of range";
            }
            access(c) = static_cast<int>(n);
            return {};
          },
          [access](const RunConfig& c) { return json(access(c)); }};
}

template <typename Access>
Field double_field(std::string key, Access access) {
  return {key,
          [access](RunConfig& c, const json& v) -> std::string {
            if (!v.is_number()) return "expected a number";
            access(c) = v.get<double>();
            return {};
          },
          [access](const RunConfig& c) { return json(access(c)); }};
}

template <typename Access>
Field bool_field(std::string key, Access access) {
  return {key,
          [access](RunConfig& c, const json& v) -> std::string {
            if (!v.is_boolean()) return "expected true or false";
            access(c) = v.get<bool>();
            return {};
          },
          [access](const RunConfig& c) { return json(access(c)); }};
}

template <typename Access>
Field path_field(std::string key, Access access) {
  return {key,
          [access](RunConfig& c, const json& v) -> std::string {
            if (!v.is_string()) return "expected a string";
            access(c) = v.get<std::string>();
            return {};
          },
          [access](const RunConfig& c) {
            return json(access(c).generic_string());
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(size_field("model.h_flow", [](auto& c) -> auto& { return c.model.h_flow; }));
    f.push_back(size_field("model.w_flow", [](auto& c) -> auto& { return c.model.w_flow; }));
    f.push_back(
        size_field("model.patch_size", [](auto& c) -> auto& { return c.model.patch_size; }));
    f.push_back(size_field("model.embed_channels",
                           [](auto& c) -> auto& { return c.model.embed_channels; }));
    f.push_back(size_field("model.heads", [](auto& c) -> auto& { return c.model.heads; }));
    f.push_back(
        size_field("model.n_layers", [](auto& c) -> auto& { return c.model.n_layers; }));
    f.push_back(size_field("model.downsample_factor",
                           [](auto& c) -> auto& { return c.model.downsample_factor; }));
    f.push_back({"model.blocks_per_layer",
                 [](RunConfig& c, const json& v) -> std::string {
                   if (!v.is_array()) return "expected an array of positive integers";
                   std::vector<std::size_t> blocks;
                   for (const auto& e : v) {
                     std::size_t n = 0;
                     if (!as_size(e, n)) return "expected an array of positive integers";
                     blocks.push_back(n);
                   }
                   c.model.blocks_per_layer = blocks;
                   return {};
                 },
                 [](const RunConfig& c) { return json(c.model.blocks_per_layer); }});
    f.push_back(
        size_field("model.n_classes", [](auto& c) -> auto& { return c.model.n_classes; }));
    f.push_back(size_field("model.channel_reduction",
                           [](auto& c) -> auto& { return c.model.channel_reduction; }));
    f.push_back(size_field("model.ffn_expansion",
                           [](auto& c) -> auto& { return c.model.ffn_expansion; }));

    f.push_back(size_field("train.epochs", [](auto& c) -> auto& { return c.train.epochs; }));
    f.push_back(double_field("train.learning_rate",
                             [](auto& c) -> auto& { return c.train.learning_rate; }));
    f.push_back(
        size_field("train.batch_size", [](auto& c) -> auto& { return c.train.batch_size; }));
    f.push_back({"train.seed",
                 [](RunConfig& c, const json& v) -> std::string {
                   if (!v.is_number_unsigned() &&
                       !(v.is_number_integer() && v.get<long long>() >= 0)) {
                     return "expected a non-negative integer";
                   }
                   c.train.seed = v.get<std::uint64_t>();
                   return {};
                 },
                 [](const RunConfig& c) { return json(c.train.seed); }});
    f.push_back(bool_field("train.shuffle", [](auto& c) -> auto& { return c.train.shuffle; }));
    f.push_back(
        size_field("train.log_every", [](auto& c) -> auto& { return c.train.log_every; }));

    f.push_back(double_field("tvl1.lambda",
                             [](auto& c) -> auto& { return c.features.tvl1.lambda_weight; }));
    f.push_back(
        double_field("tvl1.theta", [](auto& c) -> auto& { return c.features.tvl1.theta; }));
    f.push_back(
        double_field("tvl1.tau", [](auto& c) -> auto& { return c.features.tvl1.tau; }));
    f.push_back(
        int_field("tvl1.n_warps", [](auto& c) -> auto& { return c.features.tvl1.n_warps; }));
    f.push_back(int_field("tvl1.n_inner_iters",
                          [](auto& c) -> auto& { return c.features.tvl1.n_inner_iters; }));
    f.push_back(int_field("tvl1.pyramid_levels",
                          [](auto& c) -> auto& { return c.features.tvl1.pyramid_levels; }));
    f.push_back(double_field("tvl1.pyramid_scale",
                             [](auto& c) -> auto& { return c.features.tvl1.pyramid_scale; }));
    f.push_back(size_field("tvl1.min_coarse_size",
                           [](auto& c) -> auto& { return c.features.tvl1.min_coarse_size; }));

    f.push_back(int_field("features.region_px",
                          [](auto& c) -> auto& { return c.features.regions.region_px; }));
    f.push_back(bool_field("features.include_nose",
                           [](auto& c) -> auto& { return c.features.regions.include_nose; }));
    f.push_back({"features.normalization",
                 [](RunConfig& c, const json& v) -> std::string {
                   if (!v.is_string()) return "expected \"standardize\" or \"none\"";
                   try {
                     c.features.normalization = optflow::parse_normalization(v.get<std::string>());
                   } catch (const ValidationError& e) {
                     return e.what();
                   }
                   return {};
                 },
                 [](const RunConfig& c) { return json(optflow::to_string(c.features.normalization)); }});

    f.push_back(path_field("paths.manifest", [](auto& c) -> auto& { return c.manifest; }));
    f.push_back(path_field("paths.flow_dir", [](auto& c) -> auto& { return c.flow_dir; }));
    f.push_back(path_field("paths.output_dir", [](auto& c) -> auto& { return c.output_dir; }));
    f.push_back(
        size_field("loso.parallel_folds", [](auto& c) -> auto& { return c.parallel_folds; }));
    f.push_back(size_field("loso.eval_batch", [](auto& c) -> auto& { return c.eval_batch; }));
    return f;
  }();
  return table;
}

[[noreturn]] void throw_listed(const std::string& title, const std::vector<std::string>& items) {
  std::string msg = title;
  for (const auto& i : items) msg += "\n  - " + i;
  throw ConfigError(msg);
}

}  // namespace

std::vector<std::string> RunConfig::violations() const {
  std::vector<std::string> out;
  for (const auto& v : model.violations()) out.push_back("model: " + v);
  for (const auto& v : train.violations()) out.push_back("train: " + v);
  for (const auto& v : features.tvl1.violations()) out.push_back("tvl1: " + v);
  if (features.regions.region_px < 2) out.emplace_back("features: region_px must be >= 2");
  if (parallel_folds < 1) out.emplace_back("loso: parallel_folds must be >= 1");
  if (eval_batch < 1) out.emplace_back("loso: eval_batch must be >= 1");
  return out;
}

void RunConfig::validate() const {
  if (const auto bad = violations(); !bad.empty()) throw_listed("invalid configuration:", bad);
}

std::vector<std::string> known_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  std::sort(keys.begin(), keys.end());
  return keys;
}

RunConfig apply_flat_json(RunConfig base, const json& flat) {
  if (!flat.is_object()) throw ConfigError("configuration must be a JSON object");
  std::vector<std::string> errors;
  for (const auto& [key, value] : flat.items()) {
    const auto it = std::find_if(fields().begin(), fields().end(),
                                 [&](const Field& f) { return f.key == key; });
    if (it == fields().end()) {
      errors.push_back("unknown key '" + key + "'");
      continue;
    }
    if (auto err = it->set(base, value); !err.empty()) errors.push_back(key + ": " + err);
  }
  if (!errors.empty()) throw_listed("invalid configuration:", errors);
  base.features.regions.out_height = base.model.h_flow;
  base.features.regions.out_width = base.model.w_flow;
  return base;
}

json read_flat_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path.string() + ": expected a JSON object");
  return j;
}

nlohmann::ordered_json to_flat_json(const RunConfig& config) {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& f : fields()) out[f.key] = nlohmann::ordered_json::parse(f.get(config).dump());
  return out;
}

std::pair<std::string, json> parse_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("expected key=value, got '" + text + "'");
  }
  const std::string key = text.substr(0, eq), raw = text.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  return {key, value};
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    const std::string item = text.substr(start, comma - start);
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      if (item.empty() || item.front() == '-') throw std::invalid_argument(item);
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) {
      throw ConfigError("expected a comma-separated list of integers, got '" + text + "'");
    }
    out.push_back(static_cast<std::size_t>(v));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace ahmsa::cli
