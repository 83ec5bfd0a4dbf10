#pragma once

#include <cstddef>
#include <vector>

#include "ahmsa/optflow/tvl1.hpp"

namespace ahmsa::optflow {

/// Scalar optical-strain magnitude per pixel (dimensionless, >= 0).
struct StrainMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> os;
};

/// Symmetric part of the flow Jacobian, e = (grad f + grad f^T) / 2, reduced to
/// its Frobenius norm sqrt(exx^2 + 2 exy^2 + eyy^2). Central differences in the
/// interior, one-sided at the borders. Requires at least 3x3.
StrainMap optical_strain(const FlowField& flow);

}  // namespace ahmsa::optflow
