#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ahmsa/optflow/image.hpp"

namespace ahmsa::optflow {

/// Per-pixel displacement (in pixels) carrying onset content to the apex frame:
/// apex(x + u, y + v) ~= onset(x, y).
struct FlowField {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> u;
  std::vector<float> v;

  FlowField() = default;
  FlowField(std::size_t h, std::size_t w) : height(h), width(w), u(h * w, 0.0f), v(h * w, 0.0f) {}
};

/// Primal-dual TV-L1 solver settings.
///
/// `lambda_weight` weighs the data term for intensities on the 0..255 scale
/// (inputs are rescaled internally), `theta` couples the primal and auxiliary
/// flows, and `tau` is the dual step; tau * theta must stay <= 1/8.
/// `pyramid_levels == 0` picks the deepest pyramid whose coarsest level keeps
/// at least `min_coarse_size` pixels on the short side.
struct TVL1Params {
  double lambda_weight = 0.15;
  double theta = 0.3;
  double tau = 0.25;
  int n_warps = 5;
  int n_inner_iters = 30;
  int pyramid_levels = 0;
  double pyramid_scale = 0.5;
  std::size_t min_coarse_size = 8;

  /// Returns every violated invariant; empty when valid.
  std::vector<std::string> violations() const;
};

/// Number of pyramid levels used for an image of the given size.
int resolve_pyramid_levels(const TVL1Params& params, std::size_t height, std::size_t width);

/// Coarse-to-fine dense flow from `onset` to `apex`. Deterministic. Constant
/// (textureless) input yields an all-zero field.
FlowField tvl1_flow(const GrayImage& onset, const GrayImage& apex,
                    const TVL1Params& params = {});

}  // namespace ahmsa::optflow
