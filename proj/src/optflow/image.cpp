#include "ahmsa/optflow/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "ahmsa/errors.hpp"

namespace ahmsa::optflow {

void GrayImage::validate() const {
  if (height == 0 || width == 0) throw ValidationError("image has zero size");
  if (pixels.size() != height * width) {
    throw ValidationError("image pixel count does not match " + std::to_string(height) + "x" +
                          std::to_string(width));
  }
  for (float p : pixels) {
    if (!std::isfinite(p) || p < 0.0f || p > 1.0f) {
      throw ValidationError("image pixel outside [0, 1]");
    }
  }
}

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

std::size_t parse_positive(const std::string& tok, const std::filesystem::path& path,
                           const char* field) {
  try {
    std::size_t used = 0;
    const long v = std::stol(tok, &used);
    if (used == tok.size() && v > 0) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  throw IoError(path.string() + ": bad PGM " + field + " '" + tok + "'");
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  if (next_token(in) != "P5") throw IoError(path.string() + ": not a binary PGM (P5)");
  const std::size_t width = parse_positive(next_token(in), path, "width");
  const std::size_t height = parse_positive(next_token(in), path, "height");
  const std::size_t maxval = parse_positive(next_token(in), path, "maxval");
  if (maxval > 255) throw IoError(path.string() + ": only 8-bit PGM is supported");
  // next_token consumed exactly one whitespace byte after maxval.
  std::vector<unsigned char> raw(width * height);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw IoError(path.string() + ": truncated pixel data");
  }
  GrayImage img(height, width);
  const float inv = 1.0f / static_cast<float>(maxval);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    img.pixels[i] = std::min(1.0f, static_cast<float>(raw[i]) * inv);
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  image.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> raw(image.pixels.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<unsigned char>(std::lround(image.pixels[i] * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("failed writing image " + path.string());
}

}  // namespace ahmsa::optflow
