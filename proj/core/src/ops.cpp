// SPDX-License-Identifier: Apache-2.0
#include "wsed/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>

#include "wsed/error.hpp"

namespace wsed {

void BatchNormStats::set(std::vector<double> mean, std::vector<double> var) {
  if (mean.size() != var.size()) throw ShapeError("BatchNormStats::set: mean/var length mismatch");
  running_mean = std::move(mean);
  running_var = std::move(var);
  initialized = true;
}

namespace ops {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got shape " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// Row-major C[m,n] = op(A) op(B) + beta C with explicit leading dimensions.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Stride = Eigen::OuterStride<>;
  using ConstView = Eigen::Map<const Mat, Eigen::Unaligned, Stride>;
  const auto ei = [](std::size_t v) { return static_cast<Eigen::Index>(v); };
  const ConstView av(a, ei(trans_a ? k : m), ei(trans_a ? m : k), Stride(ei(lda)));
  const ConstView bv(b, ei(trans_b ? n : k), ei(trans_b ? k : n), Stride(ei(ldb)));
  Eigen::Map<Mat, Eigen::Unaligned, Stride> cv(c, ei(m), ei(n), Stride(ei(ldc)));
  if (beta == T{0}) {
    cv.setZero();
  } else if (beta != T{1}) {
    cv *= beta;
  }
  if (trans_a && trans_b) {
    cv.noalias() += av.transpose() * bv.transpose();
  } else if (trans_a) {
    cv.noalias() += av.transpose() * bv;
  } else if (trans_b) {
    cv.noalias() += av * bv.transpose();
  } else {
    cv.noalias() += av * bv;
  }
}

thread_local ConvPrecision g_conv_precision = ConvPrecision::f64;

struct ConvGeometry {
  std::size_t cin, h, w, kh, kw, ph, pw, ho, wo;
  std::size_t col_rows() const { return cin * kh * kw; }
  std::size_t plane() const { return ho * wo; }
  /// Output columns whose input column ow + kj - pw lies inside [0, w).
  std::pair<std::size_t, std::size_t> valid_cols(std::size_t kj) const {
    const std::size_t lo = std::min(wo, pw > kj ? pw - kj : 0);
    const std::size_t hi = std::max(lo, std::min(wo, w + pw - kj));
    return {lo, hi};
  }
  /// Output rows per im2col tile, sized so one tile stays cache resident.
  std::size_t tile_rows() const {
    const std::size_t cols = std::max<std::size_t>(kTileValues / col_rows(), 256);
    return std::clamp<std::size_t>(cols / wo, 1, ho);
  }
  static constexpr std::size_t kTileValues = std::size_t{1} << 17;
};

// Unfolds output rows [r0, r1) into cols [col_rows, (r1 - r0) * wo].
template <typename T>
void im2col(const double* x, const ConvGeometry& geo, std::size_t r0, std::size_t r1, T* cols) {
  const std::size_t width = (r1 - r0) * geo.wo;
  for (std::size_t c = 0; c < geo.cin; ++c) {
    for (std::size_t ki = 0; ki < geo.kh; ++ki) {
      for (std::size_t kj = 0; kj < geo.kw; ++kj) {
        T* row = cols + ((c * geo.kh + ki) * geo.kw + kj) * width;
        for (std::size_t oh = r0; oh < r1; ++oh) {
          // Input row index ih = oh + ki - ph, kept signed for the padding test.
          const auto ih = static_cast<std::ptrdiff_t>(oh + ki) - static_cast<std::ptrdiff_t>(geo.ph);
          T* out = row + (oh - r0) * geo.wo;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(geo.h)) {
            std::fill(out, out + geo.wo, T{0});
            continue;
          }
          // Output columns [lo, hi) read input column ow + kj - pw inside the row.
          const double* in = x + (c * geo.h + static_cast<std::size_t>(ih)) * geo.w + kj;
          const auto [lo, hi] = geo.valid_cols(kj);
          std::fill(out, out + lo, T{0});
          for (std::size_t ow = lo; ow < hi; ++ow) out[ow] = static_cast<T>(in[ow - geo.pw]);
          std::fill(out + hi, out + geo.wo, T{0});
        }
      }
    }
  }
}

// Adjoint of im2col for output rows [r0, r1): accumulates cols into dx.
template <typename T>
void col2im_add(const T* cols, const ConvGeometry& geo, std::size_t r0, std::size_t r1, double* dx) {
  const std::size_t width = (r1 - r0) * geo.wo;
  for (std::size_t c = 0; c < geo.cin; ++c) {
    for (std::size_t ki = 0; ki < geo.kh; ++ki) {
      for (std::size_t kj = 0; kj < geo.kw; ++kj) {
        const T* row = cols + ((c * geo.kh + ki) * geo.kw + kj) * width;
        for (std::size_t oh = r0; oh < r1; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh + ki) - static_cast<std::ptrdiff_t>(geo.ph);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(geo.h)) continue;
          double* out = dx + (c * geo.h + static_cast<std::size_t>(ih)) * geo.w + kj;
          const T* in = row + (oh - r0) * geo.wo;
          const auto [lo, hi] = geo.valid_cols(kj);
          for (std::size_t ow = lo; ow < hi; ++ow) out[ow - geo.pw] += in[ow];
        }
      }
    }
  }
}


// Copies to the GEMM element type; no copy when T is double.
template <typename T>
const T* as_gemm_input(const double* src, std::size_t count, std::vector<T>& scratch) {
  if constexpr (std::is_same_v<T, double>) {
    return src;
  } else {
    scratch.assign(src, src + count);
    return scratch.data();
  }
}

// Per-sample conv products. y holds the bias-filled output.
template <typename T>
void conv_forward(const double* x, const double* kd, double* out, const ConvGeometry& geo, std::size_t n,
                  std::size_t cout) {
  const std::size_t plane = geo.plane(), k_len = geo.col_rows(), tile = geo.tile_rows();
  const std::size_t in_stride = geo.cin * geo.h * geo.w;
  std::vector<T> cols(k_len * tile * geo.wo), kbuf, ybuf;
  const T* kp = as_gemm_input(kd, cout * k_len, kbuf);
  if constexpr (!std::is_same_v<T, double>) ybuf.resize(cout * tile * geo.wo);
  for (std::size_t s = 0; s < n; ++s) {
    double* y = out + s * cout * plane;
    for (std::size_t r0 = 0; r0 < geo.ho; r0 += tile) {
      const std::size_t r1 = std::min(geo.ho, r0 + tile);
      const std::size_t width = (r1 - r0) * geo.wo;
      im2col(x + s * in_stride, geo, r0, r1, cols.data());
      if constexpr (std::is_same_v<T, double>) {
        gemm(false, false, cout, width, k_len, kp, k_len, cols.data(), width, 1.0, y + r0 * geo.wo, plane);
      } else {
        gemm(false, false, cout, width, k_len, kp, k_len, cols.data(), width, T{0}, ybuf.data(), width);
        for (std::size_t co = 0; co < cout; ++co) {
          double* dst = y + co * plane + r0 * geo.wo;
          const T* src = ybuf.data() + co * width;
          for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
        }
      }
    }
  }
}

// Kernel and input gradients; dk / dx may be null when not wanted.
template <typename T>
void conv_backward(const double* x, const double* kd, const double* dy, double* dk, double* dx,
                   const ConvGeometry& geo, std::size_t n, std::size_t cout) {
  const std::size_t plane = geo.plane(), k_len = geo.col_rows(), tile = geo.tile_rows();
  const std::size_t in_stride = geo.cin * geo.h * geo.w;
  std::vector<T> cols(k_len * tile * geo.wo), kbuf, dybuf, dkbuf;
  const T* kp = dx ? as_gemm_input(kd, cout * k_len, kbuf) : nullptr;
  if constexpr (!std::is_same_v<T, double>) {
    dybuf.resize(cout * tile * geo.wo);
    if (dk) dkbuf.resize(cout * k_len);
  }
  for (std::size_t s = 0; s < n; ++s) {
    const double* dys = dy + s * cout * plane;
    for (std::size_t r0 = 0; r0 < geo.ho; r0 += tile) {
      const std::size_t r1 = std::min(geo.ho, r0 + tile);
      const std::size_t width = (r1 - r0) * geo.wo;
      const T* dyt = nullptr;
      std::size_t ld = plane;
      if constexpr (std::is_same_v<T, double>) {
        dyt = dys + r0 * geo.wo;
      } else {
        for (std::size_t co = 0; co < cout; ++co) {
          const double* src = dys + co * plane + r0 * geo.wo;
          std::copy(src, src + width, dybuf.begin() + static_cast<std::ptrdiff_t>(co * width));
        }
        dyt = dybuf.data();
        ld = width;
      }
      if (dk) {
        im2col(x + s * in_stride, geo, r0, r1, cols.data());
        if constexpr (std::is_same_v<T, double>) {
          gemm(false, true, cout, k_len, width, dyt, ld, cols.data(), width, 1.0, dk, k_len);
        } else {
          gemm(false, true, cout, k_len, width, dyt, ld, cols.data(), width, T{0}, dkbuf.data(), k_len);
          for (std::size_t i = 0; i < cout * k_len; ++i) dk[i] += dkbuf[i];
        }
      }
      if (dx) {
        gemm(true, false, k_len, width, cout, kp, k_len, dyt, ld, T{0}, cols.data(), width);
        col2im_add(cols.data(), geo, r0, r1, dx + s * in_stride);
      }
    }
  }
}

// Splits a shape around `axis` into (outer, extent, inner) strides.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " invalid for shape " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

ConvPrecision conv_precision() { return g_conv_precision; }
void set_conv_precision(ConvPrecision precision) { g_conv_precision = precision; }

Tensor conv2d(Graph& g, const Tensor& input, const Tensor& kernel, const Tensor& bias,
              Padding pad) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  require_rank(bias, 1, "conv2d", "bias");
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != cin) {
    throw ShapeError("conv2d: kernel input-channel dimension " + std::to_string(kernel.dim(1)) +
                     " does not match input channels " + std::to_string(cin));
  }
  if (bias.dim(0) != cout) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias.dim(0)) +
                     " does not match output channels " + std::to_string(cout));
  }
  if (kh > h + 2 * pad.h) {
    throw ShapeError("conv2d: kernel height " + std::to_string(kh) + " exceeds padded input height " +
                     std::to_string(h + 2 * pad.h));
  }
  if (kw > w + 2 * pad.w) {
    throw ShapeError("conv2d: kernel width " + std::to_string(kw) + " exceeds padded input width " +
                     std::to_string(w + 2 * pad.w));
  }
  const ConvGeometry geo{cin, h, w, kh, kw, pad.h, pad.w, h + 2 * pad.h - kh + 1,
                         w + 2 * pad.w - kw + 1};
  const std::size_t out_plane = geo.plane();
  const ConvPrecision precision = g_conv_precision;

  std::vector<double> out(n * cout * out_plane);
  const auto bd = bias.data();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t co = 0; co < cout; ++co) {
      double* y = out.data() + (s * cout + co) * out_plane;
      std::fill(y, y + out_plane, bd[co]);
    }
  }
  if (precision == ConvPrecision::f32) {
    conv_forward<float>(input.data().data(), kernel.data().data(), out.data(), geo, n, cout);
  } else {
    conv_forward<double>(input.data().data(), kernel.data().data(), out.data(), geo, n, cout);
  }

  return g.record(
      "conv2d", {n, cout, geo.ho, geo.wo}, std::move(out), {input, kernel, bias},
      [geo, n, cout, out_plane, precision](const Tensor& output, std::span<Tensor> in) {
        const auto dy = output.grad();
        Tensor& x_t = in[0];
        Tensor& k_t = in[1];
        Tensor& b_t = in[2];
        if (b_t.requires_grad()) {
          auto db = b_t.grad_buffer();
          for (std::size_t s = 0; s < n; ++s) {
            for (std::size_t co = 0; co < cout; ++co) {
              const double* row = dy.data() + (s * cout + co) * out_plane;
              db[co] += std::accumulate(row, row + out_plane, 0.0);
            }
          }
        }
        double* dk = k_t.requires_grad() ? k_t.grad_buffer().data() : nullptr;
        double* dx = x_t.requires_grad() ? x_t.grad_buffer().data() : nullptr;
        if (!dk && !dx) return;
        if (precision == ConvPrecision::f32) {
          conv_backward<float>(x_t.data().data(), k_t.data().data(), dy.data(), dk, dx, geo, n, cout);
        } else {
          conv_backward<double>(x_t.data().data(), k_t.data().data(), dy.data(), dk, dx, geo, n, cout);
        }
      });
}

Tensor batchnorm2d(Graph& g, const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   Mode mode, BatchNormStats& stats) {
  require_rank(input, 4, "batchnorm2d", "input");
  const std::size_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw ShapeError("batchnorm2d: gamma/beta must have shape [" + std::to_string(c) + "]");
  }
  if (stats.running_mean.size() != c) {
    throw ShapeError("batchnorm2d: running statistics sized for " +
                     std::to_string(stats.running_mean.size()) + " channels, input has " +
                     std::to_string(c));
  }
  const std::size_t m = n * plane;
  const auto x = input.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();

  std::vector<double> mean(c), inv_std(c);
  if (mode == Mode::train) {
    if (m < 2) throw ShapeError("batchnorm2d: train mode needs at least 2 values per channel");
    for (std::size_t ch = 0; ch < c; ++ch) {
      double sum = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const double* p = x.data() + (s * c + ch) * plane;
        sum += std::accumulate(p, p + plane, 0.0);
      }
      const double mu = sum / static_cast<double>(m);
      double sq = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const double* p = x.data() + (s * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      const double var = sq / static_cast<double>(m);
      mean[ch] = mu;
      inv_std[ch] = 1.0 / std::sqrt(var + kBatchNormEps);
      const double unbiased = sq / static_cast<double>(m - 1);
      stats.running_mean[ch] =
          kBatchNormMomentum * stats.running_mean[ch] + (1.0 - kBatchNormMomentum) * mu;
      stats.running_var[ch] =
          kBatchNormMomentum * stats.running_var[ch] + (1.0 - kBatchNormMomentum) * unbiased;
    }
    stats.initialized = true;
  } else {
    if (!stats.initialized) throw std::logic_error("batchnorm2d: uninitialized running statistics");
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = stats.running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(stats.running_var[ch] + kBatchNormEps);
    }
  }

  std::vector<double> xhat(x.size());
  std::vector<double> out(x.size());
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (s * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double xh = (x[base + i] - mean[ch]) * inv_std[ch];
        xhat[base + i] = xh;
        out[base + i] = gd[ch] * xh + bd[ch];
      }
    }
  }

  return g.record(
      "batchnorm2d", input.shape(), std::move(out), {input, gamma, beta},
      [n, c, plane, m, mode, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          const Tensor& output, std::span<Tensor> in) {
        const auto dy = output.grad();
        const auto gd = in[1].data();
        std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
        for (std::size_t s = 0; s < n; ++s) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (s * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_dy[ch] += dy[base + i];
              sum_dy_xhat[ch] += dy[base + i] * xhat[base + i];
            }
          }
        }
        if (in[1].requires_grad()) {
          auto dg = in[1].grad_buffer();
          for (std::size_t ch = 0; ch < c; ++ch) dg[ch] += sum_dy_xhat[ch];
        }
        if (in[2].requires_grad()) {
          auto db = in[2].grad_buffer();
          for (std::size_t ch = 0; ch < c; ++ch) db[ch] += sum_dy[ch];
        }
        if (!in[0].requires_grad()) return;
        auto dx = in[0].grad_buffer();
        const double inv_m = 1.0 / static_cast<double>(m);
        for (std::size_t s = 0; s < n; ++s) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (s * c + ch) * plane;
            const double k = gd[ch] * inv_std[ch];
            if (mode == Mode::eval) {
              for (std::size_t i = 0; i < plane; ++i) dx[base + i] += k * dy[base + i];
              continue;
            }
            // dx = gamma*inv_std/M * (M*dy - sum(dy) - xhat*sum(dy*xhat))
            for (std::size_t i = 0; i < plane; ++i) {
              dx[base + i] += k * (dy[base + i] - inv_m * sum_dy[ch] -
                                   xhat[base + i] * inv_m * sum_dy_xhat[ch]);
            }
          }
        }
      });
}

Tensor relu(Graph& g, const Tensor& x) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  std::transform(xd.begin(), xd.end(), out.begin(), [](double v) { return v > 0.0 ? v : 0.0; });
  return g.record("relu", x.shape(), std::move(out), {x}, [](const Tensor& o, std::span<Tensor> in) {
    const auto dy = o.grad();
    const auto xd = in[0].data();
    auto dx = in[0].grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (xd[i] > 0.0) dx[i] += dy[i];
    }
  });
}

Tensor sigmoid(Graph& g, const Tensor& x) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  std::transform(xd.begin(), xd.end(), out.begin(), [](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  return g.record("sigmoid", x.shape(), std::move(out), {x}, [](const Tensor& o, std::span<Tensor> in) {
    const auto dy = o.grad();
    const auto y = o.data();
    auto dx = in[0].grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * y[i] * (1.0 - y[i]);
  });
}

Tensor avgpool2d(Graph& g, const Tensor& x) {
  require_rank(x, 4, "avgpool2d", "input");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("avgpool2d: spatial extents must be even, got " + shape_str(x.shape()) +
                     " (pad or crop upstream)");
  }
  const std::size_t ho = h / 2, wo = w / 2, planes = n * c;
  const auto xd = x.data();
  std::vector<double> out(planes * ho * wo);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = xd.data() + p * h * w;
    double* dst = out.data() + p * ho * wo;
    for (std::size_t i = 0; i < ho; ++i) {
      const double* r0 = src + 2 * i * w;
      const double* r1 = r0 + w;
      for (std::size_t j = 0; j < wo; ++j) {
        dst[i * wo + j] = 0.25 * (r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1]);
      }
    }
  }
  return g.record("avgpool2d", {n, c, ho, wo}, std::move(out), {x},
                  [planes, h, w, ho, wo](const Tensor& o, std::span<Tensor> in) {
                    const auto dy = o.grad();
                    auto dx = in[0].grad_buffer();
                    for (std::size_t p = 0; p < planes; ++p) {
                      const double* src = dy.data() + p * ho * wo;
                      double* dst = dx.data() + p * h * w;
                      for (std::size_t i = 0; i < h; ++i) {
                        for (std::size_t j = 0; j < w; ++j) dst[i * w + j] += 0.25 * src[(i / 2) * wo + j / 2];
                      }
                    }
                  });
}

Tensor upsample2x_nearest(Graph& g, const Tensor& x) {
  require_rank(x, 4, "upsample2x_nearest", "input");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = 2 * h, wo = 2 * w, planes = n * c;
  const auto xd = x.data();
  std::vector<double> out(planes * ho * wo);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = xd.data() + p * h * w;
    double* dst = out.data() + p * ho * wo;
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j) dst[i * wo + j] = src[(i / 2) * w + j / 2];
    }
  }
  return g.record("upsample2x_nearest", {n, c, ho, wo}, std::move(out), {x},
                  [planes, h, w, ho, wo](const Tensor& o, std::span<Tensor> in) {
                    const auto dy = o.grad();
                    auto dx = in[0].grad_buffer();
                    for (std::size_t p = 0; p < planes; ++p) {
                      const double* src = dy.data() + p * ho * wo;
                      double* dst = dx.data() + p * h * w;
                      for (std::size_t i = 0; i < ho; ++i) {
                        for (std::size_t j = 0; j < wo; ++j) dst[(i / 2) * w + j / 2] += src[i * wo + j];
                      }
                    }
                  });
}

Tensor linear(Graph& g, const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() < 1) throw ShapeError("linear: input must have rank >= 1");
  require_rank(weight, 2, "linear", "weight");
  require_rank(bias, 1, "linear", "bias");
  const std::size_t din = x.shape().back();
  const std::size_t dout = weight.dim(0);
  if (weight.dim(1) != din) {
    throw ShapeError("linear: weight input dimension " + std::to_string(weight.dim(1)) +
                     " does not match input last dimension " + std::to_string(din));
  }
  if (bias.dim(0) != dout) {
    throw ShapeError("linear: bias length " + std::to_string(bias.dim(0)) +
                     " does not match output dimension " + std::to_string(dout));
  }
  const std::size_t rows = x.numel() / din;
  std::vector<double> out(rows * dout);
  const auto bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r) std::copy(bd.begin(), bd.end(), out.begin() + r * dout);
  gemm(false, true, rows, dout, din, x.data().data(), din, weight.data().data(), din, 1.0, out.data(), dout);

  Shape out_shape = x.shape();
  out_shape.back() = dout;
  return g.record("linear", std::move(out_shape), std::move(out), {x, weight, bias},
                  [rows, din, dout](const Tensor& o, std::span<Tensor> in) {
                    const auto dy = o.grad();
                    if (in[0].requires_grad()) {
                      gemm(false, false, rows, din, dout, dy.data(), dout, in[1].data().data(), din, 1.0,
                           in[0].grad_buffer().data(), din);
                    }
                    if (in[1].requires_grad()) {
                      gemm(true, false, dout, din, rows, dy.data(), dout, in[0].data().data(), din, 1.0,
                           in[1].grad_buffer().data(), din);
                    }
                    if (in[2].requires_grad()) {
                      auto db = in[2].grad_buffer();
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t j = 0; j < dout; ++j) db[j] += dy[r * dout + j];
                      }
                    }
                  });
}

Tensor softmax_along(Graph& g, const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "softmax_along");
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double mx = xd[base];
      for (std::size_t k = 1; k < s.extent; ++k) mx = std::max(mx, xd[base + k * s.inner]);
      double sum = 0.0;
      for (std::size_t k = 0; k < s.extent; ++k) {
        const double e = std::exp(xd[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        sum += e;
      }
      for (std::size_t k = 0; k < s.extent; ++k) out[base + k * s.inner] /= sum;
    }
  }
  return g.record("softmax_along", x.shape(), std::move(out), {x}, [s](const Tensor& o, std::span<Tensor> in) {
    const auto dy = o.grad();
    const auto y = o.data();
    auto dx = in[0].grad_buffer();
    for (std::size_t a = 0; a < s.outer; ++a) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = a * s.extent * s.inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < s.extent; ++k) dot += dy[base + k * s.inner] * y[base + k * s.inner];
        for (std::size_t k = 0; k < s.extent; ++k) {
          const std::size_t idx = base + k * s.inner;
          dx[idx] += y[idx] * (dy[idx] - dot);
        }
      }
    }
  });
}

Tensor sum_along(Graph& g, const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "sum_along");
  const auto xd = x.data();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < s.extent; ++k) {
      const double* src = xd.data() + (o * s.extent + k) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  return g.record("sum_along", std::move(out_shape), std::move(out), {x}, [s](const Tensor& o, std::span<Tensor> in) {
    const auto dy = o.grad();
    auto dx = in[0].grad_buffer();
    for (std::size_t a = 0; a < s.outer; ++a) {
      for (std::size_t k = 0; k < s.extent; ++k) {
        double* dst = dx.data() + (a * s.extent + k) * s.inner;
        const double* src = dy.data() + a * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return g.record("mul", a.shape(), std::move(out), {a, b}, [](const Tensor& o, std::span<Tensor> in) {
    const auto dy = o.grad();
    const auto ad = in[0].data();
    const auto bd = in[1].data();
    if (in[0].requires_grad()) {
      auto da = in[0].grad_buffer();
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i] * bd[i];
    }
    if (in[1].requires_grad()) {
      auto db = in[1].grad_buffer();
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[i] * ad[i];
    }
  });
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return g.record("add", a.shape(), std::move(out), {a, b}, [](const Tensor& o, std::span<Tensor> in) {
    const auto dy = o.grad();
    for (auto& t : in) {
      if (!t.requires_grad()) continue;
      auto d = t.grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
    }
  });
}

Tensor scale(Graph& g, const Tensor& x, double factor) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * xd[i];
  return g.record("scale", x.shape(), std::move(out), {x}, [factor](const Tensor& o, std::span<Tensor> in) {
    const auto dy = o.grad();
    auto dx = in[0].grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += factor * dy[i];
  });
}

Tensor reshape(Graph& g, const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return g.record("reshape", std::move(shape), std::move(out), {x}, [](const Tensor& o, std::span<Tensor> in) {
    const auto dy = o.grad();
    auto dx = in[0].grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
  });
}

Tensor permute(Graph& g, const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t rank = x.rank();
  if (perm.size() != rank) throw ShapeError("permute: permutation length does not match rank");
  std::vector<bool> seen(rank, false);
  for (auto p : perm) {
    if (p >= rank || seen[p]) throw ShapeError("permute: invalid permutation");
    seen[p] = true;
  }
  const Shape& in_shape = x.shape();
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(rank);
  std::vector<std::size_t> src_strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[perm[i]];
    src_strides[i] = in_strides[perm[i]];
  }
  // source offset for every destination element, in destination order
  std::vector<std::size_t> gather(x.numel());
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < gather.size(); ++flat) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < rank; ++i) off += idx[i] * src_strides[i];
    gather[flat] = off;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  const auto xd = x.data();
  std::vector<double> out(gather.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[gather[i]];
  return g.record("permute", std::move(out_shape), std::move(out), {x},
                  [gather = std::move(gather)](const Tensor& o, std::span<Tensor> in) {
                    const auto dy = o.grad();
                    auto dx = in[0].grad_buffer();
                    for (std::size_t i = 0; i < gather.size(); ++i) dx[gather[i]] += dy[i];
                  });
}

Tensor bce_loss(Graph& g, const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "bce_loss");
  const auto p = pred.data();
  const auto y = target.data();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) {
      throw std::invalid_argument("bce_loss: target value " + std::to_string(y[i]) +
                                  " at index " + std::to_string(i) + " is not 0 or 1");
    }
    const double pc = std::clamp(p[i], kBceClamp, 1.0 - kBceClamp);
    total -= y[i] * std::log(pc) + (1.0 - y[i]) * std::log(1.0 - pc);
  }
  const double inv_n = 1.0 / static_cast<double>(p.size());
  return g.record("bce_loss", {}, {total * inv_n}, {pred, target}, [inv_n](const Tensor& o, std::span<Tensor> in) {
    if (!in[0].requires_grad()) return;
    const double dy = o.grad()[0];
    const auto p = in[0].data();
    const auto y = in[1].data();
    auto dp = in[0].grad_buffer();
    for (std::size_t i = 0; i < dp.size(); ++i) {
      if (p[i] < kBceClamp || p[i] > 1.0 - kBceClamp) continue;
      dp[i] += dy * inv_n * (-y[i] / p[i] + (1.0 - y[i]) / (1.0 - p[i]));
    }
  });
}

Tensor mse_loss(Graph& g, const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse_loss");
  const auto p = pred.data();
  const auto t = target.data();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += (p[i] - t[i]) * (p[i] - t[i]);
  const double inv_n = 1.0 / static_cast<double>(p.size());
  return g.record("mse_loss", {}, {total * inv_n}, {pred, target}, [inv_n](const Tensor& o, std::span<Tensor> in) {
    const double dy = o.grad()[0];
    const auto p = in[0].data();
    const auto t = in[1].data();
    const double k = 2.0 * inv_n * dy;
    if (in[0].requires_grad()) {
      auto d = in[0].grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += k * (p[i] - t[i]);
    }
    if (in[1].requires_grad()) {
      auto d = in[1].grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= k * (p[i] - t[i]);
    }
  });
}

}  // namespace ops
}  // namespace wsed
