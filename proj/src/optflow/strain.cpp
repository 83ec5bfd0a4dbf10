#include "ahmsa/optflow/strain.hpp"

#include <cmath>
#include <string>

#include "ahmsa/errors.hpp"

namespace ahmsa::optflow {

namespace {

// d/dx of a row-major field at (y, x).
float ddx(const std::vector<float>& f, std::size_t w, std::size_t y, std::size_t x) {
  const std::size_t row = y * w;
  if (x == 0) return f[row + 1] - f[row];
  if (x + 1 == w) return f[row + x] - f[row + x - 1];
  return 0.5f * (f[row + x + 1] - f[row + x - 1]);
}

float ddy(const std::vector<float>& f, std::size_t w, std::size_t h, std::size_t y,
          std::size_t x) {
  if (y == 0) return f[w + x] - f[x];
  if (y + 1 == h) return f[y * w + x] - f[(y - 1) * w + x];
  return 0.5f * (f[(y + 1) * w + x] - f[(y - 1) * w + x]);
}

}  // namespace

StrainMap optical_strain(const FlowField& flow) {
  if (flow.height < 3 || flow.width < 3) {
    throw ValidationError("optical_strain: flow field must be at least 3x3, got " +
                          std::to_string(flow.height) + "x" + std::to_string(flow.width));
  }
  const std::size_t h = flow.height, w = flow.width;
  if (flow.u.size() != h * w || flow.v.size() != h * w) {
    throw ValidationError("optical_strain: component size does not match dims");
  }
  StrainMap out{h, w, std::vector<float>(h * w)};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const float exx = ddx(flow.u, w, y, x);
      const float eyy = ddy(flow.v, w, h, y, x);
      const float exy = 0.5f * (ddy(flow.u, w, h, y, x) + ddx(flow.v, w, y, x));
      out.os[y * w + x] = std::sqrt(exx * exx + 2.0f * exy * exy + eyy * eyy);
    }
  }
  return out;
}

}  // namespace ahmsa::optflow
