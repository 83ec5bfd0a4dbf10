#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace ahmsa::optflow {

/// Single-channel image with intensities in [0, 1], row-major.
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w, float fill = 0.0f)
      : height(h), width(w), pixels(h * w, fill) {}

  float& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  float at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }

  /// Throws ValidationError unless dims are positive and pixels are finite in [0, 1].
  void validate() const;
};

/// Binary PGM (P5), 8-bit. maxval may be below 255; values are rescaled to [0, 1].
GrayImage read_pgm(const std::filesystem::path& path);

/// Writes P5 with maxval 255; pixels are rounded to the nearest 8-bit level.
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

}  // namespace ahmsa::optflow
