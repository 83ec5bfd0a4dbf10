#include "ahmsa/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ahmsa/errors.hpp"

namespace ahmsa::ops {

namespace {

template <typename T>
using Impl = detail::TensorImpl<T>;

// C[M,N] += A[M,K] * B[K,N]. Four rows of C are updated per pass over a
// column block of B so each loaded B value feeds four multiply-adds. Every
// C element accumulates its K products in ascending k order.
template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* __restrict A,
             const T* __restrict B, T* __restrict C) {
  constexpr std::size_t kBlock = 256;
  std::size_t i = 0;
  for (; i + 4 <= M; i += 4) {
    const T* a0 = A + i * K;
    const T* a1 = a0 + K;
    const T* a2 = a1 + K;
    const T* a3 = a2 + K;
    for (std::size_t j0 = 0; j0 < N; j0 += kBlock) {
      const std::size_t jn = std::min(N, j0 + kBlock);
      T* __restrict c0 = C + i * N;
      T* __restrict c1 = c0 + N;
      T* __restrict c2 = c1 + N;
      T* __restrict c3 = c2 + N;
      for (std::size_t k = 0; k < K; ++k) {
        const T v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
        const T* __restrict b = B + k * N;
        for (std::size_t j = j0; j < jn; ++j) {
          const T bj = b[j];
          c0[j] += v0 * bj;
          c1[j] += v1 * bj;
          c2[j] += v2 * bj;
          c3[j] += v3 * bj;
        }
      }
    }
  }
  for (; i < M; ++i) {
    T* __restrict c = C + i * N;
    const T* a = A + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const T av = a[k];
      const T* __restrict b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// dst[C,R] = src[R,C]^T
template <typename T>
std::vector<T> transposed(const T* src, std::size_t R, std::size_t C) {
  std::vector<T> dst(R * C);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < C; ++c) dst[c * R + r] = src[r * C + c];
  }
  return dst;
}

// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  const auto bt = transposed(B, N, K);
  gemm_nn(M, N, K, A, bt.data(), C);
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  const auto at = transposed(A, K, M);
  gemm_nn(M, N, K, at.data(), B, C);
}

[[noreturn]] void dim_error(const std::string& op, const std::string& what) {
  throw DimensionError(op + ": " + what);
}

template <typename T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, const char* op,
                  const char* name) {
  if (t.rank() != rank) {
    dim_error(op, std::string(name) + " must have rank " + std::to_string(rank) +
                      ", got shape " + shape_to_string(t.shape()));
  }
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// Maps every flat index of `a_shape` to the flat index of a broadcast operand.
std::vector<std::size_t> broadcast_index(const Shape& a_shape, const Shape& b_shape,
                                         const char* op) {
  if (a_shape.size() != b_shape.size()) {
    dim_error(op, "rank mismatch " + shape_to_string(a_shape) + " vs " +
                      shape_to_string(b_shape));
  }
  const std::size_t rank = a_shape.size();
  std::vector<std::size_t> b_stride(rank, 0);
  std::size_t stride = 1;
  for (std::size_t d = rank; d-- > 0;) {
    if (b_shape[d] != a_shape[d] && b_shape[d] != 1) {
      dim_error(op, "axis " + std::to_string(d) + " of " + shape_to_string(b_shape) +
                        " does not broadcast to " + shape_to_string(a_shape));
    }
    b_stride[d] = b_shape[d] == 1 ? 0 : stride;
    stride *= b_shape[d];
  }
  const std::size_t n = shape_numel(a_shape);
  std::vector<std::size_t> out(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t bi = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    out[flat] = bi;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      bi += b_stride[d];
      if (idx[d] < a_shape[d]) break;
      bi -= b_stride[d] * idx[d];
      idx[d] = 0;
    }
  }
  return out;
}

}  // namespace

template <typename T>
LayerNormParams<T> LayerNormParams<T>::identity(std::size_t features, bool requires_grad) {
  return {BasicTensor<T>::full({features}, T(1), requires_grad),
          BasicTensor<T>::zeros({features}, requires_grad), T(1e-5)};
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                      const BasicTensor<T>& bias, std::size_t stride,
                      std::size_t padding) {
  constexpr const char* op = "conv2d";
  require_rank(input, 4, op, "input");
  require_rank(kernel, 4, op, "kernel");
  const std::size_t B = input.dim(0), Cin = input.dim(1), H = input.dim(2),
                    W = input.dim(3);
  const std::size_t Cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != Cin) {
    dim_error(op, "axis 1 (input channels): kernel has " + std::to_string(kernel.dim(1)) +
                      ", input has " + std::to_string(Cin));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != Cout)) {
    dim_error(op, "bias must have shape [" + std::to_string(Cout) + "], got " +
                      shape_to_string(bias.shape()));
  }
  if (stride == 0) dim_error(op, "stride must be positive");
  const std::size_t Hp = H + 2 * padding, Wp = W + 2 * padding;
  if (kh > Hp) dim_error(op, "axis 2 (height): kernel exceeds padded input");
  if (kw > Wp) dim_error(op, "axis 3 (width): kernel exceeds padded input");
  if ((Hp - kh) % stride != 0) dim_error(op, "axis 2 (height): stride does not tile input");
  if ((Wp - kw) % stride != 0) dim_error(op, "axis 3 (width): stride does not tile input");
  const std::size_t Ho = (Hp - kh) / stride + 1, Wo = (Wp - kw) / stride + 1;
  const std::size_t kdim = Cin * kh * kw, P = Ho * Wo;

  // The whole batch is lowered to one GEMM: col[kdim, B*P] holds every
  // receptive field, out[Cout, B*P] = kernel[Cout, kdim] * col.
  const std::size_t BP = B * P;
  const T* x = input.data().data();
  std::vector<T> col(kdim * BP, T(0));
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < Cin; ++c) {
      for (std::size_t ki = 0; ki < kh; ++ki) {
        for (std::size_t kj = 0; kj < kw; ++kj) {
          T* dst = col.data() + ((c * kh + ki) * kw + kj) * BP + b * P;
          for (std::size_t oh = 0; oh < Ho; ++oh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + ki) -
                                      static_cast<std::ptrdiff_t>(padding);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t ow = 0; ow < Wo; ++ow) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kj) -
                                        static_cast<std::ptrdiff_t>(padding);
              if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
              dst[oh * Wo + ow] = x[((b * Cin + c) * H + ih) * W + iw];
            }
          }
        }
      }
    }
  }

  std::vector<T> prod(Cout * BP, T(0));
  gemm_nn(Cout, BP, kdim, kernel.data().data(), col.data(), prod.data());
  std::vector<T> out(B * Cout * P);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < Cout; ++co) {
      const T bv = bias.defined() ? bias.data()[co] : T(0);
      const T* src = prod.data() + co * BP + b * P;
      T* dst = out.data() + (b * Cout + co) * P;
      for (std::size_t p = 0; p < P; ++p) dst[p] = src[p] + bv;
    }
  }

  auto in_impl = input.impl();
  auto k_impl = kernel.impl();
  auto b_impl = bias.impl();
  return BasicTensor<T>::make_result(
      {B, Cout, Ho, Wo}, std::move(out), {&input, &kernel, &bias},
      [=, col = std::move(col)](const Impl<T>& self) {
        // Gradient rearranged to [Cout, B*P] to match the forward GEMM.
        std::vector<T> g(Cout * BP);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t co = 0; co < Cout; ++co) {
            std::copy_n(self.grad.data() + (b * Cout + co) * P, P, g.data() + co * BP + b * P);
          }
        }
        if (k_impl->requires_grad) gemm_nt(Cout, kdim, BP, g.data(), col.data(), k_impl->grad.data());
        if (b_impl && b_impl->requires_grad) {
          for (std::size_t co = 0; co < Cout; ++co) {
            T acc = 0;
            for (std::size_t q = 0; q < BP; ++q) acc += g[co * BP + q];
            b_impl->grad[co] += acc;
          }
        }
        if (!in_impl->requires_grad) return;
        std::vector<T> dcol(kdim * BP, T(0));
        gemm_tn(kdim, BP, Cout, k_impl->data.data(), g.data(), dcol.data());
        T* gx = in_impl->grad.data();
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t c = 0; c < Cin; ++c) {
            for (std::size_t ki = 0; ki < kh; ++ki) {
              for (std::size_t kj = 0; kj < kw; ++kj) {
                const T* src = dcol.data() + ((c * kh + ki) * kw + kj) * BP + b * P;
                for (std::size_t oh = 0; oh < Ho; ++oh) {
                  const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + ki) -
                                            static_cast<std::ptrdiff_t>(padding);
                  if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                  for (std::size_t ow = 0; ow < Wo; ++ow) {
                    const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kj) -
                                              static_cast<std::ptrdiff_t>(padding);
                    if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                    gx[((b * Cin + c) * H + ih) * W + iw] += src[oh * Wo + ow];
                  }
                }
              }
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& input, const LayerNormParams<T>& params,
                          std::size_t axis) {
  constexpr const char* op = "layer_norm";
  if (axis >= input.rank()) dim_error(op, "axis " + std::to_string(axis) + " out of range");
  const AxisSplit s = split_at(input.shape(), axis);
  if (params.gamma.numel() != s.n || params.beta.numel() != s.n) {
    dim_error(op, "axis " + std::to_string(axis) + " has " + std::to_string(s.n) +
                      " features but gamma/beta have " +
                      std::to_string(params.gamma.numel()) + "/" +
                      std::to_string(params.beta.numel()));
  }
  if (!(params.epsilon > T(0))) throw ValidationError("layer_norm: epsilon must be positive");

  const T* x = input.data().data();
  const T* gamma = params.gamma.data().data();
  const T* beta = params.beta.data().data();
  const std::size_t n = s.n, inner = s.inner;
  std::vector<T> xhat(input.numel());
  std::vector<T> rstd(s.outer * inner);
  std::vector<T> out(input.numel());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      T mean = 0;
      for (std::size_t k = 0; k < n; ++k) mean += x[base + k * inner];
      mean /= static_cast<T>(n);
      T var = 0;
      for (std::size_t k = 0; k < n; ++k) {
        const T d = x[base + k * inner] - mean;
        var += d * d;
      }
      var /= static_cast<T>(n);
      const T r = T(1) / std::sqrt(var + params.epsilon);
      rstd[o * inner + i] = r;
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t idx = base + k * inner;
        xhat[idx] = (x[idx] - mean) * r;
        out[idx] = xhat[idx] * gamma[k] + beta[k];
      }
    }
  }

  auto in_impl = input.impl();
  auto g_impl = params.gamma.impl();
  auto b_impl = params.beta.impl();
  return BasicTensor<T>::make_result(
      input.shape(), std::move(out), {&input, &params.gamma, &params.beta},
      [=, xhat = std::move(xhat), rstd = std::move(rstd)](const Impl<T>& self) {
        const T* g = self.grad.data();
        const T* gam = g_impl->data.data();
        std::vector<T> dxhat(n);
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * n * inner + i;
            T m1 = 0, m2 = 0;
            for (std::size_t k = 0; k < n; ++k) {
              const std::size_t idx = base + k * inner;
              if (g_impl->requires_grad) g_impl->grad[k] += g[idx] * xhat[idx];
              if (b_impl->requires_grad) b_impl->grad[k] += g[idx];
              dxhat[k] = g[idx] * gam[k];
              m1 += dxhat[k];
              m2 += dxhat[k] * xhat[idx];
            }
            if (!in_impl->requires_grad) continue;
            m1 /= static_cast<T>(n);
            m2 /= static_cast<T>(n);
            const T r = rstd[o * inner + i];
            for (std::size_t k = 0; k < n; ++k) {
              const std::size_t idx = base + k * inner;
              in_impl->grad[idx] += r * (dxhat[k] - m1 - xhat[idx] * m2);
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> adaptive_pool(const BasicTensor<T>& input, std::size_t out_h,
                             std::size_t out_w, PoolMode mode) {
  constexpr const char* op = "adaptive_pool";
  require_rank(input, 4, op, "input");
  const std::size_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (out_h == 0 || out_h > H) {
    dim_error(op, "axis 2 (height): output " + std::to_string(out_h) + " not in [1, " +
                      std::to_string(H) + "]");
  }
  if (out_w == 0 || out_w > W) {
    dim_error(op, "axis 3 (width): output " + std::to_string(out_w) + " not in [1, " +
                      std::to_string(W) + "]");
  }
  const std::size_t planes = B * C, cells = out_h * out_w;
  const T* x = input.data().data();
  std::vector<T> out(planes * cells);
  std::vector<std::size_t> argmax(mode == PoolMode::kMax ? planes * cells : 0);
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* xp = x + pl * H * W;
    for (std::size_t oi = 0; oi < out_h; ++oi) {
      const std::size_t h0 = oi * H / out_h, h1 = ((oi + 1) * H + out_h - 1) / out_h;
      for (std::size_t oj = 0; oj < out_w; ++oj) {
        const std::size_t w0 = oj * W / out_w, w1 = ((oj + 1) * W + out_w - 1) / out_w;
        const std::size_t o = pl * cells + oi * out_w + oj;
        if (mode == PoolMode::kMax) {
          std::size_t best = h0 * W + w0;
          for (std::size_t h = h0; h < h1; ++h) {
            for (std::size_t w = w0; w < w1; ++w) {
              if (xp[h * W + w] > xp[best]) best = h * W + w;
            }
          }
          argmax[o] = pl * H * W + best;
          out[o] = xp[best];
        } else {
          T acc = 0;
          for (std::size_t h = h0; h < h1; ++h) {
            for (std::size_t w = w0; w < w1; ++w) acc += xp[h * W + w];
          }
          out[o] = acc / static_cast<T>((h1 - h0) * (w1 - w0));
        }
      }
    }
  }

  auto in_impl = input.impl();
  return BasicTensor<T>::make_result(
      {B, C, out_h, out_w}, std::move(out), {&input},
      [=, argmax = std::move(argmax)](const Impl<T>& self) {
        const T* g = self.grad.data();
        T* gx = in_impl->grad.data();
        if (mode == PoolMode::kMax) {
          for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += g[o];
          return;
        }
        for (std::size_t pl = 0; pl < planes; ++pl) {
          for (std::size_t oi = 0; oi < out_h; ++oi) {
            const std::size_t h0 = oi * H / out_h, h1 = ((oi + 1) * H + out_h - 1) / out_h;
            for (std::size_t oj = 0; oj < out_w; ++oj) {
              const std::size_t w0 = oj * W / out_w, w1 = ((oj + 1) * W + out_w - 1) / out_w;
              const T share = g[pl * cells + oi * out_w + oj] /
                              static_cast<T>((h1 - h0) * (w1 - w0));
              for (std::size_t h = h0; h < h1; ++h) {
                for (std::size_t w = w0; w < w1; ++w) gx[pl * H * W + h * W + w] += share;
              }
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  const auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  auto in_impl = input.impl();
  return BasicTensor<T>::make_result(input.shape(), std::move(out), {&input},
                                     [in_impl](const Impl<T>& self) {
                                       const auto& xs = in_impl->data;
                                       for (std::size_t i = 0; i < xs.size(); ++i) {
                                         if (xs[i] > T(0)) in_impl->grad[i] += self.grad[i];
                                       }
                                     });
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& input) {
  const auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-x[i]));
  auto in_impl = input.impl();
  return BasicTensor<T>::make_result(input.shape(), std::move(out), {&input},
                                     [in_impl](const Impl<T>& self) {
                                       const auto& y = self.data;
                                       for (std::size_t i = 0; i < y.size(); ++i) {
                                         in_impl->grad[i] += self.grad[i] * y[i] * (T(1) - y[i]);
                                       }
                                     });
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& input, std::size_t axis) {
  if (axis >= input.rank()) {
    dim_error("softmax", "axis " + std::to_string(axis) + " invalid for shape " +
                             shape_to_string(input.shape()));
  }
  const AxisSplit s = split_at(input.shape(), axis);
  const T* x = input.data().data();
  std::vector<T> out(input.numel());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.n * s.inner + i;
      T mx = x[base];
      for (std::size_t k = 1; k < s.n; ++k) mx = std::max(mx, x[base + k * s.inner]);
      T total = 0;
      for (std::size_t k = 0; k < s.n; ++k) {
        const std::size_t idx = base + k * s.inner;
        out[idx] = std::exp(x[idx] - mx);
        total += out[idx];
      }
      for (std::size_t k = 0; k < s.n; ++k) out[base + k * s.inner] /= total;
    }
  }
  auto in_impl = input.impl();
  return BasicTensor<T>::make_result(
      input.shape(), std::move(out), {&input}, [in_impl, s](const Impl<T>& self) {
        const auto& y = self.data;
        const auto& g = self.grad;
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.n * s.inner + i;
            T dot = 0;
            for (std::size_t k = 0; k < s.n; ++k) {
              dot += g[base + k * s.inner] * y[base + k * s.inner];
            }
            for (std::size_t k = 0; k < s.n; ++k) {
              const std::size_t idx = base + k * s.inner;
              in_impl->grad[idx] += y[idx] * (g[idx] - dot);
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  constexpr const char* op = "matmul";
  if (a.rank() < 2 || b.rank() < 2) dim_error(op, "operands must have rank >= 2");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const std::size_t M = as[as.size() - 2], K = as.back(), N = bs.back();
  if (bs[bs.size() - 2] != K) {
    dim_error(op, "contraction axis mismatch: " + shape_to_string(as) + " x " +
                      shape_to_string(bs));
  }
  const Shape la(as.begin(), as.end() - 2), lb(bs.begin(), bs.end() - 2);
  const std::size_t pa = shape_numel(la), pb = shape_numel(lb);
  Shape lead;
  if (la == lb) {
    lead = la;
  } else if (pb == 1) {
    lead = la;
  } else if (pa == 1) {
    lead = lb;
  } else {
    dim_error(op, "leading axes do not broadcast: " + shape_to_string(as) + " x " +
                      shape_to_string(bs));
  }
  const std::size_t batch = std::max(pa, pb);
  const std::size_t a_step = pa == 1 ? 0 : M * K, b_step = pb == 1 ? 0 : K * N;
  Shape out_shape = lead;
  out_shape.push_back(M);
  out_shape.push_back(N);

  const T* ad = a.data().data();
  const T* bd = b.data().data();
  std::vector<T> out(batch * M * N, T(0));
  for (std::size_t i = 0; i < batch; ++i) {
    gemm_nn(M, N, K, ad + i * a_step, bd + i * b_step, out.data() + i * M * N);
  }
  auto a_impl = a.impl();
  auto b_impl = b.impl();
  return BasicTensor<T>::make_result(
      std::move(out_shape), std::move(out), {&a, &b}, [=](const Impl<T>& self) {
        const T* g = self.grad.data();
        for (std::size_t i = 0; i < batch; ++i) {
          const T* gi = g + i * M * N;
          if (a_impl->requires_grad) {
            gemm_nt(M, K, N, gi, b_impl->data.data() + i * b_step,
                    a_impl->grad.data() + i * a_step);
          }
          if (b_impl->requires_grad) {
            gemm_tn(K, N, M, a_impl->data.data() + i * a_step, gi,
                    b_impl->grad.data() + i * b_step);
          }
        }
      });
}

template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy", "logits");
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  if (labels.size() != B) {
    dim_error("cross_entropy", "axis 0 (batch): " + std::to_string(B) + " logit rows but " +
                                   std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < B; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= C) {
      throw ValidationError("cross_entropy: label " + std::to_string(labels[i]) +
                            " at row " + std::to_string(i) + " outside [0, " +
                            std::to_string(C) + ")");
    }
  }
  const T* z = logits.data().data();
  std::vector<T> probs(B * C);
  T total = 0;
  for (std::size_t i = 0; i < B; ++i) {
    const T* zi = z + i * C;
    const T mx = *std::max_element(zi, zi + C);
    T se = 0;
    for (std::size_t c = 0; c < C; ++c) se += std::exp(zi[c] - mx);
    const T lse = mx + std::log(se);
    total += lse - zi[labels[i]];
    for (std::size_t c = 0; c < C; ++c) probs[i * C + c] = std::exp(zi[c] - lse);
  }
  const std::vector<int> lab(labels.begin(), labels.end());
  auto in_impl = logits.impl();
  return BasicTensor<T>::make_result(
      {1}, {total / static_cast<T>(B)}, {&logits},
      [=, probs = std::move(probs)](const Impl<T>& self) {
        const T g = self.grad[0] / static_cast<T>(B);
        for (std::size_t i = 0; i < B; ++i) {
          for (std::size_t c = 0; c < C; ++c) {
            const T onehot = static_cast<std::size_t>(lab[i]) == c ? T(1) : T(0);
            in_impl->grad[i * C + c] += g * (probs[i * C + c] - onehot);
          }
        }
      });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<T> out(ad.size());
  auto a_impl = a.impl();
  auto b_impl = b.impl();
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] + bd[i];
    return BasicTensor<T>::make_result(a.shape(), std::move(out), {&a, &b},
                                       [=](const Impl<T>& self) {
                                         for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                           if (a_impl->requires_grad) a_impl->grad[i] += self.grad[i];
                                           if (b_impl->requires_grad) b_impl->grad[i] += self.grad[i];
                                         }
                                       });
  }
  auto bi = broadcast_index(a.shape(), b.shape(), "add");
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] + bd[bi[i]];
  return BasicTensor<T>::make_result(
      a.shape(), std::move(out), {&a, &b}, [=, bi = std::move(bi)](const Impl<T>& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          if (a_impl->requires_grad) a_impl->grad[i] += self.grad[i];
          if (b_impl->requires_grad) b_impl->grad[bi[i]] += self.grad[i];
        }
      });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<std::size_t> bi;
  if (a.shape() == b.shape()) {
    bi.resize(ad.size());
    for (std::size_t i = 0; i < bi.size(); ++i) bi[i] = i;
  } else {
    bi = broadcast_index(a.shape(), b.shape(), "mul");
  }
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] * bd[bi[i]];
  auto a_impl = a.impl();
  auto b_impl = b.impl();
  return BasicTensor<T>::make_result(
      a.shape(), std::move(out), {&a, &b}, [=, bi = std::move(bi)](const Impl<T>& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          if (a_impl->requires_grad) a_impl->grad[i] += self.grad[i] * b_impl->data[bi[i]];
          if (b_impl->requires_grad) b_impl->grad[bi[i]] += self.grad[i] * a_impl->data[i];
        }
      });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& input, T factor) {
  const auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
  auto in_impl = input.impl();
  return BasicTensor<T>::make_result(input.shape(), std::move(out), {&input},
                                     [=](const Impl<T>& self) {
                                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                         in_impl->grad[i] += self.grad[i] * factor;
                                       }
                                     });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& input) {
  T total = 0;
  for (T v : input.data()) total += v;
  auto in_impl = input.impl();
  return BasicTensor<T>::make_result({1}, {total}, {&input}, [=](const Impl<T>& self) {
    for (T& g : in_impl->grad) g += self.grad[0];
  });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& input, Shape shape) {
  if (shape_numel(shape) != input.numel()) {
    dim_error("reshape", "cannot view " + shape_to_string(input.shape()) + " as " +
                             shape_to_string(shape));
  }
  const auto x = input.data();
  auto in_impl = input.impl();
  return BasicTensor<T>::make_result(std::move(shape), std::vector<T>(x.begin(), x.end()),
                                     {&input}, [=](const Impl<T>& self) {
                                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                         in_impl->grad[i] += self.grad[i];
                                       }
                                     });
}

template <typename T>
BasicTensor<T> transpose_last2(const BasicTensor<T>& input) {
  if (input.rank() < 2) dim_error("transpose_last2", "input must have rank >= 2");
  Shape shape = input.shape();
  const std::size_t R = shape[shape.size() - 2], Cc = shape.back();
  const std::size_t batch = input.numel() / (R * Cc);
  std::swap(shape[shape.size() - 2], shape.back());
  const T* x = input.data().data();
  std::vector<T> out(input.numel());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t c = 0; c < Cc; ++c) out[b * R * Cc + c * R + r] = x[b * R * Cc + r * Cc + c];
    }
  }
  auto in_impl = input.impl();
  return BasicTensor<T>::make_result(std::move(shape), std::move(out), {&input},
                                     [=](const Impl<T>& self) {
                                       for (std::size_t b = 0; b < batch; ++b) {
                                         for (std::size_t r = 0; r < R; ++r) {
                                           for (std::size_t c = 0; c < Cc; ++c) {
                                             in_impl->grad[b * R * Cc + r * Cc + c] +=
                                                 self.grad[b * R * Cc + c * R + r];
                                           }
                                         }
                                       }
                                     });
}

#define AHMSA_INSTANTIATE_OPS(T)                                                          \
  template struct LayerNormParams<T>;                                                     \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,            \
                                 const BasicTensor<T>&, std::size_t, std::size_t);        \
  template BasicTensor<T> layer_norm(const BasicTensor<T>&, const LayerNormParams<T>&,    \
                                     std::size_t);                                        \
  template BasicTensor<T> adaptive_pool(const BasicTensor<T>&, std::size_t, std::size_t,  \
                                        PoolMode);                                        \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                    \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                 \
  template BasicTensor<T> softmax(const BasicTensor<T>&, std::size_t);                    \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);           \
  template BasicTensor<T> cross_entropy(const BasicTensor<T>&, std::span<const int>);     \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);              \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);              \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                     \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                          \
  template BasicTensor<T> transpose_last2(const BasicTensor<T>&);

AHMSA_INSTANTIATE_OPS(float)
AHMSA_INSTANTIATE_OPS(double)

}  // namespace ahmsa::ops
