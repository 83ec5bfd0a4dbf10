#pragma once

#include <cstddef>
#include <span>

#include "ahmsa/tensor/tensor.hpp"

namespace ahmsa::ops {

/// Learnable affine part of layer normalization. mean and variance are
/// computed per call; epsilon is fixed.
template <typename T>
struct LayerNormParams {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  T epsilon = T(1e-5);

  static LayerNormParams identity(std::size_t features, bool requires_grad = true);
};

enum class PoolMode { kMax, kAvg };

/// 2-D cross-correlation. input [B,Cin,H,W], kernel [Cout,Cin,kh,kw], bias [Cout]
/// (pass an undefined tensor for no bias).
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                      const BasicTensor<T>& bias, std::size_t stride = 1,
                      std::size_t padding = 0);

/// Normalizes over a single axis with population variance:
/// y = (x - mean) / sqrt(var + eps) * gamma + beta, gamma/beta indexed along `axis`.
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& input, const LayerNormParams<T>& params,
                          std::size_t axis);

/// Adaptive pooling over the two trailing axes of a [B,C,H,W] tensor. Window i
/// covers [floor(i*H/out_h), ceil((i+1)*H/out_h)). Max ties go to the first
/// element in row-major order.
template <typename T>
BasicTensor<T> adaptive_pool(const BasicTensor<T>& input, std::size_t out_h,
                             std::size_t out_w, PoolMode mode);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& input);
/// Max-subtracted softmax along `axis`.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& input, std::size_t axis);

/// a [...,M,K] x b [...,K,N]. Leading axes must match exactly, or one operand's
/// leading axes must all be 1 (or absent), in which case it is broadcast.
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Mean softmax cross-entropy over the batch, computed via log-sum-exp.
/// logits [B,C], labels in [0, C).
template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels);

/// a + b and a * b, where each axis of b equals a's or is 1 (same rank).
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& input, T factor);
/// Sum of all elements, shape [1].
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& input);

/// Row-major reinterpretation; the element count must not change.
template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& input, Shape shape);
/// Swaps the two trailing axes.
template <typename T>
BasicTensor<T> transpose_last2(const BasicTensor<T>& input);

}  // namespace ahmsa::ops
