#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ahmsa/data/manifest.hpp"

namespace ahmsa::data {

/// Desk-scale stand-in for a micro-expression database. Each sample is an
/// onset frame (smooth random texture, per-subject style) and an apex frame in
/// which class-dependent motion is applied around the landmarks:
///   negative: lips move down, positive: lips move up, surprise: eyes move outward.
struct SyntheticOptions {
  std::uint64_t seed = 42;
  std::size_t n_subjects = 6;
  std::size_t samples_per_subject = 9;
  std::size_t image_size = 96;
  double min_shift_px = 1.0;
  double max_shift_px = 3.0;
  double noise_sigma = 0.01;  // per-frame Gaussian noise, intensity units

  std::vector<std::string> violations() const;
};

struct SyntheticDataset {
  std::filesystem::path manifest_path;
  std::vector<Sample> samples;  // paths relative to the output directory
};

/// Writes images/<sample>_{onset,apex}.pgm and manifest.csv under `out_dir`.
/// Throws ConfigError for invalid options and IoError if writing fails.
SyntheticDataset gen_synthetic(const SyntheticOptions& options,
                               const std::filesystem::path& out_dir);

}  // namespace ahmsa::data
