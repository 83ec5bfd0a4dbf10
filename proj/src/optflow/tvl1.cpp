#include "ahmsa/optflow/tvl1.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ahmsa/errors.hpp"

// Duality-based TV-L1 (Zach, Pock & Bischof 2007) in the formulation of
// Sanchez, Meinhardt-Llopis & Facciolo, "TV-L1 Optical Flow Estimation",
// IPOL 2013: thresholding step on the linearized data term, Chambolle
// projection for the dual variables, warping at every scale.

namespace ahmsa::optflow {

namespace {

constexpr float kGradIsZero = 1e-10f;
constexpr double kPresmoothSigma = 0.8;

struct Plane {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<float> d;

  Plane() = default;
  Plane(std::size_t h_, std::size_t w_, float fill = 0.0f) : h(h_), w(w_), d(h_ * w_, fill) {}
  float& operator()(std::size_t y, std::size_t x) { return d[y * w + x]; }
  float operator()(std::size_t y, std::size_t x) const { return d[y * w + x]; }
  float clamped(std::ptrdiff_t y, std::ptrdiff_t x) const {
    y = std::clamp<std::ptrdiff_t>(y, 0, static_cast<std::ptrdiff_t>(h) - 1);
    x = std::clamp<std::ptrdiff_t>(x, 0, static_cast<std::ptrdiff_t>(w) - 1);
    return d[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  }
};

void gaussian_blur(Plane& img, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double k = std::exp(-0.5 * i * i / (sigma * sigma));
    kernel[i + radius] = static_cast<float>(k);
    total += k;
  }
  for (float& k : kernel) k = static_cast<float>(k / total);

  Plane tmp(img.h, img.w);
  for (std::size_t y = 0; y < img.h; ++y) {
    for (std::size_t x = 0; x < img.w; ++x) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[i + radius] *
               img.clamped(static_cast<std::ptrdiff_t>(y), static_cast<std::ptrdiff_t>(x) + i);
      }
      tmp(y, x) = acc;
    }
  }
  for (std::size_t y = 0; y < img.h; ++y) {
    for (std::size_t x = 0; x < img.w; ++x) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[i + radius] *
               tmp.clamped(static_cast<std::ptrdiff_t>(y) + i, static_cast<std::ptrdiff_t>(x));
      }
      img(y, x) = acc;
    }
  }
}

// Keys cubic convolution, a = -0.5.
inline float cubic(float p0, float p1, float p2, float p3, float t) {
  return p1 + 0.5f * t *
                  (p2 - p0 +
                   t * (2.0f * p0 - 5.0f * p1 + 4.0f * p2 - p3 + t * (3.0f * (p1 - p2) + p3 - p0)));
}

float bicubic(const Plane& img, float x, float y) {
  const float fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::ptrdiff_t>(fx), iy = static_cast<std::ptrdiff_t>(fy);
  const float tx = x - fx, ty = y - fy;
  float rows[4];
  for (int j = -1; j <= 2; ++j) {
    rows[j + 1] = cubic(img.clamped(iy + j, ix - 1), img.clamped(iy + j, ix),
                        img.clamped(iy + j, ix + 1), img.clamped(iy + j, ix + 2), tx);
  }
  return cubic(rows[0], rows[1], rows[2], rows[3], ty);
}

// Resample to (nh, nw) with pixel-centre alignment.
Plane resample(const Plane& in, std::size_t nh, std::size_t nw) {
  Plane out(nh, nw);
  const float sy = static_cast<float>(in.h) / static_cast<float>(nh);
  const float sx = static_cast<float>(in.w) / static_cast<float>(nw);
  for (std::size_t y = 0; y < nh; ++y) {
    const float src_y = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
    for (std::size_t x = 0; x < nw; ++x) {
      const float src_x = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
      out(y, x) = bicubic(in, src_x, src_y);
    }
  }
  return out;
}

Plane zoom_out(const Plane& in, std::size_t nh, std::size_t nw) {
  const double factor = static_cast<double>(nw) / static_cast<double>(in.w);
  Plane smoothed = in;
  gaussian_blur(smoothed, 0.6 * std::sqrt(1.0 / (factor * factor) - 1.0));
  return resample(smoothed, nh, nw);
}

void centered_gradient(const Plane& img, Plane& gx, Plane& gy) {
  for (std::size_t y = 0; y < img.h; ++y) {
    for (std::size_t x = 0; x < img.w; ++x) {
      if (img.w > 1) {
        if (x == 0) {
          gx(y, x) = img(y, 1) - img(y, 0);
        } else if (x + 1 == img.w) {
          gx(y, x) = img(y, x) - img(y, x - 1);
        } else {
          gx(y, x) = 0.5f * (img(y, x + 1) - img(y, x - 1));
        }
      }
      if (img.h > 1) {
        if (y == 0) {
          gy(y, x) = img(1, x) - img(0, x);
        } else if (y + 1 == img.h) {
          gy(y, x) = img(y, x) - img(y - 1, x);
        } else {
          gy(y, x) = 0.5f * (img(y + 1, x) - img(y - 1, x));
        }
      }
    }
  }
}

void forward_gradient(const Plane& f, Plane& fx, Plane& fy) {
  for (std::size_t y = 0; y < f.h; ++y) {
    for (std::size_t x = 0; x < f.w; ++x) {
      fx(y, x) = x + 1 < f.w ? f(y, x + 1) - f(y, x) : 0.0f;
      fy(y, x) = y + 1 < f.h ? f(y + 1, x) - f(y, x) : 0.0f;
    }
  }
}

// Negative adjoint of forward_gradient.
void divergence(const Plane& p1, const Plane& p2, Plane& div) {
  for (std::size_t y = 0; y < p1.h; ++y) {
    for (std::size_t x = 0; x < p1.w; ++x) {
      const float dx = (x + 1 < p1.w ? p1(y, x) : 0.0f) - (x > 0 ? p1(y, x - 1) : 0.0f);
      const float dy = (y + 1 < p1.h ? p2(y, x) : 0.0f) - (y > 0 ? p2(y - 1, x) : 0.0f);
      div(y, x) = dx + dy;
    }
  }
}

void solve_level(const Plane& I0, const Plane& I1, Plane& u1, Plane& u2, const TVL1Params& prm) {
  const std::size_t h = I0.h, w = I0.w, n = h * w;
  const float l_t = static_cast<float>(prm.lambda_weight * prm.theta);
  const float theta = static_cast<float>(prm.theta);
  const float taut = static_cast<float>(prm.tau / prm.theta);

  Plane I1x(h, w), I1y(h, w);
  centered_gradient(I1, I1x, I1y);

  Plane I1w(h, w), I1wx(h, w), I1wy(h, w), grad(h, w), rho_c(h, w);
  Plane v1(h, w), v2(h, w), div1(h, w), div2(h, w);
  Plane u1x(h, w), u1y(h, w), u2x(h, w), u2y(h, w);
  Plane p11(h, w), p12(h, w), p21(h, w), p22(h, w);

  for (int warp = 0; warp < prm.n_warps; ++warp) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const float sx = static_cast<float>(x) + u1(y, x);
        const float sy = static_cast<float>(y) + u2(y, x);
        I1w(y, x) = bicubic(I1, sx, sy);
        I1wx(y, x) = bicubic(I1x, sx, sy);
        I1wy(y, x) = bicubic(I1y, sx, sy);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      grad.d[i] = I1wx.d[i] * I1wx.d[i] + I1wy.d[i] * I1wy.d[i];
      rho_c.d[i] = I1w.d[i] - I1wx.d[i] * u1.d[i] - I1wy.d[i] * u2.d[i] - I0.d[i];
    }

    for (int iter = 0; iter < prm.n_inner_iters; ++iter) {
      for (std::size_t i = 0; i < n; ++i) {
        const float rho = rho_c.d[i] + I1wx.d[i] * u1.d[i] + I1wy.d[i] * u2.d[i];
        float d1 = 0.0f, d2 = 0.0f;
        if (rho < -l_t * grad.d[i]) {
          d1 = l_t * I1wx.d[i];
          d2 = l_t * I1wy.d[i];
        } else if (rho > l_t * grad.d[i]) {
          d1 = -l_t * I1wx.d[i];
          d2 = -l_t * I1wy.d[i];
        } else if (grad.d[i] >= kGradIsZero) {
          const float fi = -rho / grad.d[i];
          d1 = fi * I1wx.d[i];
          d2 = fi * I1wy.d[i];
        }
        v1.d[i] = u1.d[i] + d1;
        v2.d[i] = u2.d[i] + d2;
      }

      divergence(p11, p12, div1);
      divergence(p21, p22, div2);
      for (std::size_t i = 0; i < n; ++i) {
        u1.d[i] = v1.d[i] + theta * div1.d[i];
        u2.d[i] = v2.d[i] + theta * div2.d[i];
      }

      forward_gradient(u1, u1x, u1y);
      forward_gradient(u2, u2x, u2y);
      for (std::size_t i = 0; i < n; ++i) {
        const float ng1 = 1.0f + taut * std::sqrt(u1x.d[i] * u1x.d[i] + u1y.d[i] * u1y.d[i]);
        const float ng2 = 1.0f + taut * std::sqrt(u2x.d[i] * u2x.d[i] + u2y.d[i] * u2y.d[i]);
        p11.d[i] = (p11.d[i] + taut * u1x.d[i]) / ng1;
        p12.d[i] = (p12.d[i] + taut * u1y.d[i]) / ng1;
        p21.d[i] = (p21.d[i] + taut * u2x.d[i]) / ng2;
        p22.d[i] = (p22.d[i] + taut * u2y.d[i]) / ng2;
      }
    }
  }
}

bool is_constant(const GrayImage& img) {
  const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  return *hi - *lo <= 1e-7f;
}

}  // namespace

std::vector<std::string> TVL1Params::violations() const {
  std::vector<std::string> out;
  if (!(lambda_weight > 0.0)) out.emplace_back("tvl1.lambda must be > 0");
  if (!(theta > 0.0)) out.emplace_back("tvl1.theta must be > 0");
  if (!(tau > 0.0)) out.emplace_back("tvl1.tau must be > 0");
  if (tau * theta > 0.125 + 1e-12) out.emplace_back("tvl1.tau * tvl1.theta must be <= 0.125");
  if (n_warps < 1) out.emplace_back("tvl1.n_warps must be >= 1");
  if (n_inner_iters < 1) out.emplace_back("tvl1.n_inner_iters must be >= 1");
  if (pyramid_levels < 0) out.emplace_back("tvl1.pyramid_levels must be >= 0 (0 = auto)");
  if (!(pyramid_scale > 0.0 && pyramid_scale < 1.0)) {
    out.emplace_back("tvl1.pyramid_scale must lie in (0, 1)");
  }
  if (min_coarse_size < 1) out.emplace_back("tvl1.min_coarse_size must be >= 1");
  return out;
}

int resolve_pyramid_levels(const TVL1Params& params, std::size_t height, std::size_t width) {
  std::size_t short_side = std::min(height, width);
  int levels = 1;
  while (true) {
    const auto next = static_cast<std::size_t>(
        std::lround(static_cast<double>(short_side) * params.pyramid_scale));
    if (next < params.min_coarse_size || next >= short_side) break;
    if (params.pyramid_levels > 0 && levels >= params.pyramid_levels) break;
    short_side = next;
    ++levels;
  }
  return levels;
}

FlowField tvl1_flow(const GrayImage& onset, const GrayImage& apex, const TVL1Params& params) {
  if (onset.height != apex.height || onset.width != apex.width) {
    throw ValidationError("tvl1_flow: onset is " + std::to_string(onset.height) + "x" +
                          std::to_string(onset.width) + " but apex is " +
                          std::to_string(apex.height) + "x" + std::to_string(apex.width));
  }
  if (onset.height < 16 || onset.width < 16) {
    throw ValidationError("tvl1_flow: frames must be at least 16x16");
  }
  if (const auto bad = params.violations(); !bad.empty()) throw ValidationError(bad.front());
  onset.validate();
  apex.validate();

  const std::size_t H = onset.height, W = onset.width;
  FlowField flow(H, W);
  if (is_constant(onset) || is_constant(apex)) return flow;

  const int levels = resolve_pyramid_levels(params, H, W);
  std::vector<Plane> I0s(levels), I1s(levels);
  I0s[0] = Plane(H, W);
  I1s[0] = Plane(H, W);
  for (std::size_t i = 0; i < H * W; ++i) {
    I0s[0].d[i] = onset.pixels[i] * 255.0f;
    I1s[0].d[i] = apex.pixels[i] * 255.0f;
  }
  gaussian_blur(I0s[0], kPresmoothSigma);
  gaussian_blur(I1s[0], kPresmoothSigma);
  for (int l = 1; l < levels; ++l) {
    const auto nh = static_cast<std::size_t>(
        std::lround(static_cast<double>(I0s[l - 1].h) * params.pyramid_scale));
    const auto nw = static_cast<std::size_t>(
        std::lround(static_cast<double>(I0s[l - 1].w) * params.pyramid_scale));
    I0s[l] = zoom_out(I0s[l - 1], nh, nw);
    I1s[l] = zoom_out(I1s[l - 1], nh, nw);
  }

  Plane u1(I0s[levels - 1].h, I0s[levels - 1].w);
  Plane u2(I0s[levels - 1].h, I0s[levels - 1].w);
  for (int l = levels - 1; l >= 0; --l) {
    solve_level(I0s[l], I1s[l], u1, u2, params);
    if (l == 0) break;
    const Plane& finer = I0s[l - 1];
    const float ry = static_cast<float>(finer.h) / static_cast<float>(u1.h);
    const float rx = static_cast<float>(finer.w) / static_cast<float>(u1.w);
    u1 = resample(u1, finer.h, finer.w);
    u2 = resample(u2, finer.h, finer.w);
    for (float& e : u1.d) e *= rx;
    for (float& e : u2.d) e *= ry;
  }
  flow.u = std::move(u1.d);
  flow.v = std::move(u2.d);
  return flow;
}

}  // namespace ahmsa::optflow
