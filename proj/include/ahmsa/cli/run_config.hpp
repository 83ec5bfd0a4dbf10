#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ahmsa/model/config.hpp"
#include "ahmsa/optflow/feature_map.hpp"
#include "ahmsa/train/trainer.hpp"

namespace ahmsa::cli {

/// Everything a run needs, merged from a flat JSON file with dotted keys
/// ("model.heads", "train.epochs", "tvl1.theta", "paths.manifest", ...) and
/// command-line overrides.
struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  optflow::FeatureConfig features;  // regions.out_* follow model.h_flow / w_flow
  std::filesystem::path manifest;
  std::filesystem::path flow_dir;
  std::filesystem::path output_dir;
  std::size_t parallel_folds = 1;
  std::size_t eval_batch = 64;

  /// Every violated invariant of every section. The CLI demands lr > 0.
  std::vector<std::string> violations() const;
  /// Throws ConfigError listing every violation.
  void validate() const;
};

/// Sorted list of accepted keys.
std::vector<std::string> known_keys();

/// Applies each key of a flat JSON object on top of `base`. Unknown keys and
/// type errors are collected and thrown together as one ConfigError.
/// Does not check the semantic invariants; call validate() for that.
RunConfig apply_flat_json(RunConfig base, const nlohmann::json& flat);

/// Reads a flat JSON object from disk (IoError if unreadable, ConfigError if
/// it is not a JSON object).
nlohmann::json read_flat_json(const std::filesystem::path& path);

/// Fully resolved configuration with every known key, in a stable order.
nlohmann::ordered_json to_flat_json(const RunConfig& config);

/// Parses "key=value" where value is JSON if it parses as JSON and a string
/// otherwise. Throws ConfigError on a missing '='.
std::pair<std::string, nlohmann::json> parse_assignment(const std::string& text);

/// Parses a comma-separated list of non-negative integers, e.g. "1,1,8".
std::vector<std::size_t> parse_size_list(const std::string& text);

}  // namespace ahmsa::cli
