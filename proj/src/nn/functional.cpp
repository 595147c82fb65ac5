// SPDX-License-Identifier: Apache-2.0
#include "serdarts/nn/functional.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "serdarts/ops.hpp"

namespace serdarts::nn {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMatrix = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMapMatrix = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using ConstMapColVector = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
using Index = Eigen::Index;
using Signed = std::int64_t;

/// Range [lo, hi) of output positions o with 0 <= o * stride + offset < extent.
struct Span {
  Signed lo;
  Signed hi;
};

Span valid_outputs(Signed offset, Signed stride, Signed extent, Signed outputs) {
  // o >= ceil(-offset / stride)
  Signed lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  // o <= floor((extent - 1 - offset) / stride)
  Signed top = extent - 1 - offset;
  Signed hi = top < 0 ? 0 : top / stride + 1;
  lo = std::clamp<Signed>(lo, 0, outputs);
  hi = std::clamp<Signed>(hi, lo, outputs);
  return {lo, hi};
}

// Fixed-lane double accumulators: vectorizable and bit-stable regardless of
// buffer alignment.
constexpr std::size_t kLanes = 8;

template <typename T>
double lane_sum(const T* p, std::size_t n) {
  double acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (std::size_t k = 0; k < kLanes; ++k) acc[k] += double(p[i + k]);
  for (; i < n; ++i) acc[i % kLanes] += double(p[i]);
  double total = 0.0;
  for (double a : acc) total += a;
  return total;
}

/// sum_i a[i] * (b[i] - shift)
template <typename T>
double lane_dot_centered(const T* a, const T* b, double shift, std::size_t n) {
  double acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (std::size_t k = 0; k < kLanes; ++k) acc[k] += double(a[i + k]) * (double(b[i + k]) - shift);
  for (; i < n; ++i) acc[i % kLanes] += double(a[i]) * (double(b[i]) - shift);
  double total = 0.0;
  for (double v : acc) total += v;
  return total;
}

/// sum_i (p[i] - shift)^2
template <typename T>
double lane_centered_sq(const T* p, double shift, std::size_t n) {
  double acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (std::size_t k = 0; k < kLanes; ++k) {
      const double d = double(p[i + k]) - shift;
      acc[k] += d * d;
    }
  for (; i < n; ++i) {
    const double d = double(p[i]) - shift;
    acc[i % kLanes] += d * d;
  }
  double total = 0.0;
  for (double v : acc) total += v;
  return total;
}

void require_rank4(const Shape& shape, const char* op) {
  if (shape.size() != 4) {
    throw ShapeError(std::string(op) + " expects a [B x C x H x W] tensor, got " + shape_str(shape));
  }
}

struct ConvDims {
  std::size_t batch, in_channels, height, width;
  std::size_t out_channels, out_height, out_width;
  std::size_t in_per_group, out_per_group, patch;
};

/// Gathers one sample/group input window matrix [Cin_g*kh*kw x Ho*Wo].
template <typename T>
void im2col(const T* input, const ConvDims& d, const Conv2dGeometry& g, T* col) {
  const Signed H = Signed(d.height), W = Signed(d.width);
  const Signed Ho = Signed(d.out_height), Wo = Signed(d.out_width);
  const Signed sh = Signed(g.stride_h), sw = Signed(g.stride_w);
  for (std::size_t c = 0; c < d.in_per_group; ++c) {
    const T* plane = input + c * d.height * d.width;
    for (std::size_t i = 0; i < g.kernel_h; ++i) {
      const Signed off_h = Signed(i * g.dilation_h) - Signed(g.pad_h);
      for (std::size_t j = 0; j < g.kernel_w; ++j) {
        const Signed off_w = Signed(j * g.dilation_w) - Signed(g.pad_w);
        T* row = col + ((c * g.kernel_h + i) * g.kernel_w + j) * std::size_t(Ho * Wo);
        std::fill(row, row + Ho * Wo, T(0));
        const Span hs = valid_outputs(off_h, sh, H, Ho);
        const Span ws = valid_outputs(off_w, sw, W, Wo);
        for (Signed ho = hs.lo; ho < hs.hi; ++ho) {
          const T* src = plane + (ho * sh + off_h) * W;
          T* dst = row + ho * Wo;
          for (Signed wo = ws.lo; wo < ws.hi; ++wo) dst[wo] = src[wo * sw + off_w];
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvDims& d, const Conv2dGeometry& g, T* input_grad) {
  const Signed H = Signed(d.height), W = Signed(d.width);
  const Signed Ho = Signed(d.out_height), Wo = Signed(d.out_width);
  const Signed sh = Signed(g.stride_h), sw = Signed(g.stride_w);
  for (std::size_t c = 0; c < d.in_per_group; ++c) {
    T* plane = input_grad + c * d.height * d.width;
    for (std::size_t i = 0; i < g.kernel_h; ++i) {
      const Signed off_h = Signed(i * g.dilation_h) - Signed(g.pad_h);
      for (std::size_t j = 0; j < g.kernel_w; ++j) {
        const Signed off_w = Signed(j * g.dilation_w) - Signed(g.pad_w);
        const T* row = col + ((c * g.kernel_h + i) * g.kernel_w + j) * std::size_t(Ho * Wo);
        const Span hs = valid_outputs(off_h, sh, H, Ho);
        const Span ws = valid_outputs(off_w, sw, W, Wo);
        for (Signed ho = hs.lo; ho < hs.hi; ++ho) {
          T* dst = plane + (ho * sh + off_h) * W;
          const T* src = row + ho * Wo;
          for (Signed wo = ws.lo; wo < ws.hi; ++wo) dst[wo * sw + off_w] += src[wo];
        }
      }
    }
  }
}

bool is_pointwise(const Conv2dGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride_h == 1 && g.stride_w == 1 && g.pad_h == 0 &&
         g.pad_w == 0;
}

template <typename T>
void depthwise_forward(const T* x, const T* w, T* out, const ConvDims& d, const Conv2dGeometry& g) {
  const Signed H = Signed(d.height), W = Signed(d.width);
  const Signed Ho = Signed(d.out_height), Wo = Signed(d.out_width);
  const Signed sh = Signed(g.stride_h), sw = Signed(g.stride_w);
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t c = 0; c < d.in_channels; ++c) {
      const T* in = x + (b * d.in_channels + c) * d.height * d.width;
      T* o = out + (b * d.out_channels + c) * d.out_height * d.out_width;
      const T* kernel = w + c * g.kernel_h * g.kernel_w;
      for (std::size_t i = 0; i < g.kernel_h; ++i) {
        const Signed off_h = Signed(i * g.dilation_h) - Signed(g.pad_h);
        const Span hs = valid_outputs(off_h, sh, H, Ho);
        for (std::size_t j = 0; j < g.kernel_w; ++j) {
          const Signed off_w = Signed(j * g.dilation_w) - Signed(g.pad_w);
          const Span ws = valid_outputs(off_w, sw, W, Wo);
          const T wv = kernel[i * g.kernel_w + j];
          for (Signed ho = hs.lo; ho < hs.hi; ++ho) {
            const T* src = in + (ho * sh + off_h) * W + off_w;
            T* dst = o + ho * Wo;
            if (sw == 1) {
              for (Signed wo = ws.lo; wo < ws.hi; ++wo) dst[wo] += wv * src[wo];
            } else {
              for (Signed wo = ws.lo; wo < ws.hi; ++wo) dst[wo] += wv * src[wo * sw];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void depthwise_backward(const T* x, const T* w, const T* grad, T* gx, T* gw, const ConvDims& d,
                        const Conv2dGeometry& g) {
  const Signed H = Signed(d.height), W = Signed(d.width);
  const Signed Ho = Signed(d.out_height), Wo = Signed(d.out_width);
  const Signed sh = Signed(g.stride_h), sw = Signed(g.stride_w);
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t c = 0; c < d.in_channels; ++c) {
      const T* in = x + (b * d.in_channels + c) * d.height * d.width;
      const T* go = grad + (b * d.out_channels + c) * d.out_height * d.out_width;
      T* gin = gx ? gx + (b * d.in_channels + c) * d.height * d.width : nullptr;
      const T* kernel = w + c * g.kernel_h * g.kernel_w;
      T* gkernel = gw ? gw + c * g.kernel_h * g.kernel_w : nullptr;
      for (std::size_t i = 0; i < g.kernel_h; ++i) {
        const Signed off_h = Signed(i * g.dilation_h) - Signed(g.pad_h);
        const Span hs = valid_outputs(off_h, sh, H, Ho);
        for (std::size_t j = 0; j < g.kernel_w; ++j) {
          const Signed off_w = Signed(j * g.dilation_w) - Signed(g.pad_w);
          const Span ws = valid_outputs(off_w, sw, W, Wo);
          const T wv = kernel[i * g.kernel_w + j];
          double acc = 0.0;
          for (Signed ho = hs.lo; ho < hs.hi; ++ho) {
            const Signed base = (ho * sh + off_h) * W + off_w;
            const T* gsrc = go + ho * Wo;
            if (gin) {
              T* dst = gin + base;
              if (sw == 1) {
                for (Signed wo = ws.lo; wo < ws.hi; ++wo) dst[wo] += wv * gsrc[wo];
              } else {
                for (Signed wo = ws.lo; wo < ws.hi; ++wo) dst[wo * sw] += wv * gsrc[wo];
              }
            }
            if (gkernel) {
              const T* src = in + base;
              if (sw == 1) {
                acc += lane_dot_centered(gsrc + ws.lo, src + ws.lo, 0.0, std::size_t(ws.hi - ws.lo));
              } else {
                for (Signed wo = ws.lo; wo < ws.hi; ++wo) acc += double(gsrc[wo]) * double(src[wo * sw]);
              }
            }
          }
          if (gkernel) gkernel[i * g.kernel_w + j] += T(acc);
        }
      }
    }
  }
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t padding, std::size_t dilation) {
  if (stride == 0 || kernel == 0 || dilation == 0) throw ShapeError("kernel, stride and dilation must be positive");
  const Signed span = Signed(dilation * (kernel - 1) + 1);
  const Signed numerator = Signed(in + 2 * padding) - span;
  if (numerator < 0) {
    throw ShapeError("window of extent " + std::to_string(span) + " exceeds padded input extent " +
                     std::to_string(in + 2 * padding));
  }
  return std::size_t(numerator / Signed(stride)) + 1;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv2dGeometry& g) {
  require_rank4(x.shape(), "conv2d");
  require_rank4(weight.shape(), "conv2d weight");
  ConvDims d{};
  d.batch = x.dim(0);
  d.in_channels = x.dim(1);
  d.height = x.dim(2);
  d.width = x.dim(3);
  d.out_channels = weight.dim(0);
  if (g.groups == 0 || d.in_channels % g.groups != 0 || d.out_channels % g.groups != 0) {
    throw ShapeError("conv2d: channels " + std::to_string(d.in_channels) + "->" +
                     std::to_string(d.out_channels) + " not divisible by groups " + std::to_string(g.groups));
  }
  d.in_per_group = d.in_channels / g.groups;
  d.out_per_group = d.out_channels / g.groups;
  if (weight.dim(1) != d.in_per_group || weight.dim(2) != g.kernel_h || weight.dim(3) != g.kernel_w) {
    throw ShapeError("conv2d: weight " + shape_str(weight.shape()) + " does not match input " +
                     shape_str(x.shape()) + " with " + std::to_string(g.groups) + " groups");
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != d.out_channels)) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " for " + std::to_string(d.out_channels) +
                     " output channels");
  }
  d.out_height = conv_output_extent(d.height, g.kernel_h, g.stride_h, g.pad_h, g.dilation_h);
  d.out_width = conv_output_extent(d.width, g.kernel_w, g.stride_w, g.pad_w, g.dilation_w);
  d.patch = d.in_per_group * g.kernel_h * g.kernel_w;
  const std::size_t in_plane = d.height * d.width;
  const std::size_t out_plane = d.out_height * d.out_width;
  const bool depthwise = g.groups == d.in_channels && d.out_channels == d.in_channels;
  const bool pointwise = is_pointwise(g);

  Tensor<T> out({d.batch, d.out_channels, d.out_height, d.out_width});
  T* o = out.data().data();
  const T* xin = x.data().data();
  const T* wv = weight.data().data();
  if (depthwise) {
    depthwise_forward(xin, wv, o, d, g);
  } else {
    std::vector<T> col(pointwise ? 0 : d.patch * out_plane);
    for (std::size_t b = 0; b < d.batch; ++b) {
      for (std::size_t gi = 0; gi < g.groups; ++gi) {
        const T* sample = xin + (b * d.in_channels + gi * d.in_per_group) * in_plane;
        const T* cols = sample;
        if (!pointwise) {
          im2col(sample, d, g, col.data());
          cols = col.data();
        }
        MapMatrix<T>(o + (b * d.out_channels + gi * d.out_per_group) * out_plane, Index(d.out_per_group),
                     Index(out_plane))
            .noalias() = ConstMapMatrix<T>(wv + gi * d.out_per_group * d.patch, Index(d.out_per_group),
                                           Index(d.patch)) *
                         ConstMapMatrix<T>(cols, Index(d.patch), Index(out_plane));
      }
    }
  }
  if (bias.defined()) {
    auto bv = bias.data();
    for (std::size_t b = 0; b < d.batch; ++b)
      for (std::size_t c = 0; c < d.out_channels; ++c) {
        T* plane = o + (b * d.out_channels + c) * out_plane;
        for (std::size_t i = 0; i < out_plane; ++i) plane[i] += bv[c];
      }
  }

  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  detail::attach<T>(out, inputs, "conv2d", [d, g, depthwise, pointwise](TensorNode<T>& self) {
    auto& xn = self.inputs[0];
    auto& wn = self.inputs[1];
    const std::size_t in_plane = d.height * d.width;
    const std::size_t out_plane = d.out_height * d.out_width;
    const T* grad = self.grad.data();
    T* gx = xn->tracked ? xn->ensure_grad().data() : nullptr;
    T* gw = wn->tracked ? wn->ensure_grad().data() : nullptr;
    if (self.inputs.size() > 2 && self.inputs[2]->tracked) {
      auto& gb = self.inputs[2]->ensure_grad();
      for (std::size_t b = 0; b < d.batch; ++b)
        for (std::size_t c = 0; c < d.out_channels; ++c) {
          const T* plane = grad + (b * d.out_channels + c) * out_plane;
          T acc = T(0);
          for (std::size_t i = 0; i < out_plane; ++i) acc += plane[i];
          gb[c] += acc;
        }
    }
    if (!gx && !gw) return;
    if (depthwise) {
      depthwise_backward(xn->data.data(), wn->data.data(), grad, gx, gw, d, g);
      return;
    }
    std::vector<T> col(pointwise ? 0 : d.patch * out_plane);
    std::vector<T> dcol(gx && !pointwise ? d.patch * out_plane : 0);
    for (std::size_t b = 0; b < d.batch; ++b) {
      for (std::size_t gi = 0; gi < g.groups; ++gi) {
        const T* sample = xn->data.data() + (b * d.in_channels + gi * d.in_per_group) * in_plane;
        ConstMapMatrix<T> go(grad + (b * d.out_channels + gi * d.out_per_group) * out_plane,
                             Index(d.out_per_group), Index(out_plane));
        ConstMapMatrix<T> wg(wn->data.data() + gi * d.out_per_group * d.patch, Index(d.out_per_group),
                             Index(d.patch));
        if (gw) {
          const T* cols = sample;
          if (!pointwise) {
            im2col(sample, d, g, col.data());
            cols = col.data();
          }
          MapMatrix<T>(gw + gi * d.out_per_group * d.patch, Index(d.out_per_group), Index(d.patch)).noalias() +=
              go * ConstMapMatrix<T>(cols, Index(d.patch), Index(out_plane)).transpose();
        }
        if (gx) {
          T* gsample = gx + (b * d.in_channels + gi * d.in_per_group) * in_plane;
          if (pointwise) {
            MapMatrix<T>(gsample, Index(d.patch), Index(out_plane)).noalias() += wg.transpose() * go;
          } else {
            MapMatrix<T>(dcol.data(), Index(d.patch), Index(out_plane)).noalias() = wg.transpose() * go;
            col2im(dcol.data(), d, g, gsample);
          }
        }
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> pool2d(PoolKind kind, const Tensor<T>& x, const Pool2dGeometry& g) {
  require_rank4(x.shape(), "pool2d");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (g.kernel_h > H + 2 * g.pad_h || g.kernel_w > W + 2 * g.pad_w) {
    throw ShapeError("pool2d: kernel " + std::to_string(g.kernel_h) + "x" + std::to_string(g.kernel_w) +
                     " larger than padded input " + shape_str(x.shape()));
  }
  const std::size_t Ho = conv_output_extent(H, g.kernel_h, g.stride_h, g.pad_h);
  const std::size_t Wo = conv_output_extent(W, g.kernel_w, g.stride_w, g.pad_w);
  const std::size_t in_plane = H * W, out_plane = Ho * Wo;
  const Signed sh = Signed(g.stride_h), sw = Signed(g.stride_w);

  // Window membership is identical for every plane; count valid cells once.
  std::vector<std::uint32_t> counts(out_plane, 0);
  for (std::size_t i = 0; i < g.kernel_h; ++i) {
    const Signed off_h = Signed(i) - Signed(g.pad_h);
    const Span hs = valid_outputs(off_h, sh, Signed(H), Signed(Ho));
    for (std::size_t j = 0; j < g.kernel_w; ++j) {
      const Signed off_w = Signed(j) - Signed(g.pad_w);
      const Span ws = valid_outputs(off_w, sw, Signed(W), Signed(Wo));
      for (Signed ho = hs.lo; ho < hs.hi; ++ho)
        for (Signed wo = ws.lo; wo < ws.hi; ++wo) ++counts[ho * Signed(Wo) + wo];
    }
  }
  if (std::find(counts.begin(), counts.end(), 0u) != counts.end()) {
    throw ShapeError("pool2d: padding leaves a window with no input cells");
  }

  Tensor<T> out({B, C, Ho, Wo});
  T* o = out.data().data();
  const T* in = x.data().data();
  std::vector<std::uint32_t> argmax(kind == PoolKind::max ? B * C * out_plane : 0);
  for (std::size_t p = 0; p < B * C; ++p) {
    const T* src_plane = in + p * in_plane;
    T* dst = o + p * out_plane;
    std::uint32_t* arg = kind == PoolKind::max ? argmax.data() + p * out_plane : nullptr;
    if (kind == PoolKind::max) std::fill(dst, dst + out_plane, -std::numeric_limits<T>::infinity());
    for (std::size_t i = 0; i < g.kernel_h; ++i) {
      const Signed off_h = Signed(i) - Signed(g.pad_h);
      const Span hs = valid_outputs(off_h, sh, Signed(H), Signed(Ho));
      for (std::size_t j = 0; j < g.kernel_w; ++j) {
        const Signed off_w = Signed(j) - Signed(g.pad_w);
        const Span ws = valid_outputs(off_w, sw, Signed(W), Signed(Wo));
        for (Signed ho = hs.lo; ho < hs.hi; ++ho) {
          const Signed row = (ho * sh + off_h) * Signed(W) + off_w;
          if (kind == PoolKind::max) {
            // Strict comparison keeps the earliest window cell on ties.
            T* d = dst + ho * Signed(Wo);
            std::uint32_t* a = arg + ho * Signed(Wo);
            const T* srow = src_plane + row;
            const auto base = static_cast<std::uint32_t>(row);
            const auto step = static_cast<std::uint32_t>(sw);
            if (sw == 1) {
              const auto lo = static_cast<std::uint32_t>(ws.lo), hi = static_cast<std::uint32_t>(ws.hi);
              for (std::uint32_t wo = lo; wo < hi; ++wo) {
                const T v = srow[wo];
                const bool gt = v > d[wo];
                d[wo] = gt ? v : d[wo];
                a[wo] = gt ? base + wo : a[wo];
              }
            } else {
              for (Signed wo = ws.lo; wo < ws.hi; ++wo) {
                const T v = srow[wo * sw];
                const bool gt = v > d[wo];
                d[wo] = gt ? v : d[wo];
                a[wo] = gt ? base + static_cast<std::uint32_t>(wo) * step : a[wo];
              }
            }
          } else if (sw == 1) {
            T* d = dst + ho * Signed(Wo);
            const T* srow = src_plane + row;
            for (Signed wo = ws.lo; wo < ws.hi; ++wo) d[wo] += srow[wo];
          } else {
            for (Signed wo = ws.lo; wo < ws.hi; ++wo) dst[ho * Signed(Wo) + wo] += src_plane[row + wo * sw];
          }
        }
      }
    }
    if (kind == PoolKind::avg) {
      for (std::size_t k = 0; k < out_plane; ++k) dst[k] /= static_cast<T>(counts[k]);
    }
  }

  if (BranchTrace::active())
    for (std::uint32_t a : argmax) BranchTrace::record(a);

  detail::attach<T>(out, {x}, kind == PoolKind::max ? "max_pool2d" : "avg_pool2d",
                    [kind, g, B, C, H, W, Ho, Wo, argmax = std::move(argmax),
                     counts = std::move(counts)](TensorNode<T>& self) {
                      auto& gx = self.inputs[0]->ensure_grad();
                      const std::size_t in_plane = H * W, out_plane = Ho * Wo;
                      const Signed sh = Signed(g.stride_h), sw = Signed(g.stride_w);
                      std::vector<T> scaled(kind == PoolKind::avg ? out_plane : 0);
                      for (std::size_t p = 0; p < B * C; ++p) {
                        const T* go = self.grad.data() + p * out_plane;
                        T* gin = gx.data() + p * in_plane;
                        if (kind == PoolKind::max) {
                          const std::uint32_t* arg = argmax.data() + p * out_plane;
                          for (std::size_t k = 0; k < out_plane; ++k) gin[arg[k]] += go[k];
                          continue;
                        }
                        for (std::size_t k = 0; k < out_plane; ++k) scaled[k] = go[k] / static_cast<T>(counts[k]);
                        for (std::size_t i = 0; i < g.kernel_h; ++i) {
                          const Signed off_h = Signed(i) - Signed(g.pad_h);
                          const Span hs = valid_outputs(off_h, sh, Signed(H), Signed(Ho));
                          for (std::size_t j = 0; j < g.kernel_w; ++j) {
                            const Signed off_w = Signed(j) - Signed(g.pad_w);
                            const Span ws = valid_outputs(off_w, sw, Signed(W), Signed(Wo));
                            for (Signed ho = hs.lo; ho < hs.hi; ++ho) {
                              T* dst = gin + (ho * sh + off_h) * Signed(W) + off_w;
                              const T* src = scaled.data() + ho * Signed(Wo);
                              if (sw == 1) {
                                for (Signed wo = ws.lo; wo < ws.hi; ++wo) dst[wo] += src[wo];
                              } else {
                                for (Signed wo = ws.lo; wo < ws.hi; ++wo) dst[wo * sw] += src[wo];
                              }
                            }
                          }
                        }
                      }
                    });
  return out;
}

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& scale, const Tensor<T>& shift,
                      BatchNormState<T>& state, bool training) {
  require_rank4(x.shape(), "batchnorm2d");
  const std::size_t B = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (B == 0) throw ShapeError("batchnorm2d on an empty batch");
  if (scale.numel() != C || shift.numel() != C || state.running_mean.numel() != C ||
      state.running_var.numel() != C) {
    throw ShapeError("batchnorm2d: parameters sized for a different channel count than " +
                     shape_str(x.shape()));
  }
  const std::size_t count = B * plane;
  std::vector<T> mean(C), invstd(C);
  const T* in = x.data().data();
  auto running_mean = state.running_mean.data();
  auto running_var = state.running_var.data();
  for (std::size_t c = 0; c < C; ++c) {
    if (training) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b) s += lane_sum(in + (b * C + c) * plane, plane);
      const double m = s / double(count);
      double sq = 0.0;
      for (std::size_t b = 0; b < B; ++b) sq += lane_centered_sq(in + (b * C + c) * plane, m, plane);
      const double var = sq / double(count);
      mean[c] = T(m);
      invstd[c] = T(1.0 / std::sqrt(var + state.eps));
      const double unbiased = count > 1 ? sq / double(count - 1) : var;
      running_mean[c] = T((1.0 - state.momentum) * running_mean[c] + state.momentum * m);
      running_var[c] = T((1.0 - state.momentum) * running_var[c] + state.momentum * unbiased);
    } else {
      mean[c] = running_mean[c];
      invstd[c] = T(1.0 / std::sqrt(double(running_var[c]) + state.eps));
    }
  }
  Tensor<T> out(x.shape());
  T* o = out.data().data();
  auto gamma = scale.data();
  auto beta = shift.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const T* p = in + (b * C + c) * plane;
      T* q = o + (b * C + c) * plane;
      const T a = gamma[c] * invstd[c];
      const T shift_c = beta[c] - mean[c] * a;
      for (std::size_t i = 0; i < plane; ++i) q[i] = p[i] * a + shift_c;
    }
  detail::attach<T>(out, {x, scale, shift}, "batchnorm2d",
                    [B, C, plane, training, mean = std::move(mean), invstd = std::move(invstd)](TensorNode<T>& self) {
                      auto& xn = self.inputs[0];
                      auto& sn = self.inputs[1];
                      auto& bn = self.inputs[2];
                      const T* g = self.grad.data();
                      const T* in = xn->data.data();
                      const double count = double(B * plane);
                      std::vector<double> sum_g(C, 0.0), sum_gx(C, 0.0);
                      for (std::size_t b = 0; b < B; ++b)
                        for (std::size_t c = 0; c < C; ++c) {
                          const T* gp = g + (b * C + c) * plane;
                          const T* p = in + (b * C + c) * plane;
                          sum_g[c] += lane_sum(gp, plane);
                          sum_gx[c] += lane_dot_centered(gp, p, double(mean[c]), plane) * double(invstd[c]);
                        }
                      if (sn->tracked) {
                        auto& gs = sn->ensure_grad();
                        for (std::size_t c = 0; c < C; ++c) gs[c] += T(sum_gx[c]);
                      }
                      if (bn->tracked) {
                        auto& gb = bn->ensure_grad();
                        for (std::size_t c = 0; c < C; ++c) gb[c] += T(sum_g[c]);
                      }
                      if (!xn->tracked) return;
                      auto& gx = xn->ensure_grad();
                      const auto& gamma = sn->data;
                      for (std::size_t b = 0; b < B; ++b)
                        for (std::size_t c = 0; c < C; ++c) {
                          const T* gp = g + (b * C + c) * plane;
                          const T* p = in + (b * C + c) * plane;
                          T* q = gx.data() + (b * C + c) * plane;
                          const T a = gamma[c] * invstd[c];
                          if (!training) {
                            for (std::size_t i = 0; i < plane; ++i) q[i] += a * gp[i];
                            continue;
                          }
                          const T mg = T(sum_g[c] / count);
                          const T mgx = T(sum_gx[c] / count);
                          for (std::size_t i = 0; i < plane; ++i) {
                            const T xhat = (p[i] - mean[c]) * invstd[c];
                            q[i] += a * (gp[i] - mg - xhat * mgx);
                          }
                        }
                    });
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1)) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  }
  const std::size_t n = x.dim(0), in = x.dim(1), outf = weight.dim(0);
  if (bias.defined() && bias.numel() != outf) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " for " + std::to_string(outf) + " outputs");
  }
  Tensor<T> out({n, outf});
  MapMatrix<T> y(out.data().data(), Index(n), Index(outf));
  y.noalias() = ConstMapMatrix<T>(x.data().data(), Index(n), Index(in)) *
                ConstMapMatrix<T>(weight.data().data(), Index(outf), Index(in)).transpose();
  if (bias.defined()) {
    y.rowwise() += ConstMapColVector<T>(bias.data().data(), Index(outf)).transpose();
  }
  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  detail::attach<T>(out, inputs, "linear", [n, in, outf](TensorNode<T>& self) {
    auto& xn = self.inputs[0];
    auto& wn = self.inputs[1];
    ConstMapMatrix<T> g(self.grad.data(), Index(n), Index(outf));
    if (xn->tracked) {
      MapMatrix<T>(xn->ensure_grad().data(), Index(n), Index(in)).noalias() +=
          g * ConstMapMatrix<T>(wn->data.data(), Index(outf), Index(in));
    }
    if (wn->tracked) {
      MapMatrix<T>(wn->ensure_grad().data(), Index(outf), Index(in)).noalias() +=
          g.transpose() * ConstMapMatrix<T>(xn->data.data(), Index(n), Index(in));
    }
    if (self.inputs.size() > 2 && self.inputs[2]->tracked) {
      auto& gb = self.inputs[2]->ensure_grad();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < outf; ++c) gb[c] += self.grad[r * outf + c];
    }
  });
  return out;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, RngState& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw Error("dropout probability must be in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const T keep_scale = T(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = rng.bernoulli(p) ? T(0) : keep_scale;
  Tensor<T> out(x.shape());
  auto o = out.data();
  auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] * mask[i];
  detail::attach<T>(out, {x}, "dropout", [mask = std::move(mask)](TensorNode<T>& self) {
    auto& gx = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * mask[i];
  });
  return out;
}

template <typename T>
Tensor<T> to_sequence(const Tensor<T>& x) {
  require_rank4(x.shape(), "to_sequence");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor<T> out({B, W, C * H});
  auto o = out.data();
  auto in = x.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w) o[(b * W + w) * C * H + c * H + h] = in[((b * C + c) * H + h) * W + w];
  detail::attach<T>(out, {x}, "to_sequence", [B, C, H, W](TensorNode<T>& self) {
    auto& gx = self.inputs[0]->ensure_grad();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t h = 0; h < H; ++h)
          for (std::size_t w = 0; w < W; ++w)
            gx[((b * C + c) * H + h) * W + w] += self.grad[(b * W + w) * C * H + c * H + h];
  });
  return out;
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
  require_rank4(x.shape(), "flatten");
  return reshape(x, {x.dim(0), x.dim(1) * x.dim(2) * x.dim(3)});
}

template <typename T>
Tensor<T> shift_one(const Tensor<T>& x) {
  require_rank4(x.shape(), "shift_one");
  const std::size_t planes = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor<T> out(x.shape());
  auto o = out.data();
  auto in = x.data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t h = 0; h + 1 < H; ++h)
      for (std::size_t w = 0; w + 1 < W; ++w) o[(p * H + h) * W + w] = in[(p * H + h + 1) * W + w + 1];
  detail::attach<T>(out, {x}, "shift_one", [planes, H, W](TensorNode<T>& self) {
    auto& gx = self.inputs[0]->ensure_grad();
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t h = 0; h + 1 < H; ++h)
        for (std::size_t w = 0; w + 1 < W; ++w) gx[(p * H + h + 1) * W + w + 1] += self.grad[(p * H + h) * W + w];
  });
  return out;
}

template <typename T>
Tensor<T> weighted_time_sum(const Tensor<T>& weights, const Tensor<T>& seq) {
  if (seq.rank() != 3 || weights.rank() != 2 || weights.dim(0) != seq.dim(0) || weights.dim(1) != seq.dim(1)) {
    throw ShapeError("weighted_time_sum: weights " + shape_str(weights.shape()) + " vs sequence " +
                     shape_str(seq.shape()));
  }
  const std::size_t B = seq.dim(0), steps = seq.dim(1), H = seq.dim(2);
  Tensor<T> out({B, H});
  auto o = out.data();
  auto w = weights.data();
  auto s = seq.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < steps; ++t) {
      const T wt = w[b * steps + t];
      for (std::size_t h = 0; h < H; ++h) o[b * H + h] += wt * s[(b * steps + t) * H + h];
    }
  detail::attach<T>(out, {weights, seq}, "weighted_time_sum", [B, steps, H](TensorNode<T>& self) {
    auto& wn = self.inputs[0];
    auto& sn = self.inputs[1];
    const auto& g = self.grad;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < steps; ++t) {
        const std::size_t row = (b * steps + t) * H;
        if (wn->tracked) {
          T dot = T(0);
          for (std::size_t h = 0; h < H; ++h) dot += g[b * H + h] * sn->data[row + h];
          wn->ensure_grad()[b * steps + t] += dot;
        }
        if (sn->tracked) {
          auto& gs = sn->ensure_grad();
          const T wt = wn->data[b * steps + t];
          for (std::size_t h = 0; h < H; ++h) gs[row + h] += wt * g[b * H + h];
        }
      }
  });
  return out;
}

#define SERDARTS_INSTANTIATE_NN(T)                                                                    \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Conv2dGeometry&); \
  template Tensor<T> pool2d(PoolKind, const Tensor<T>&, const Pool2dGeometry&);                        \
  template Tensor<T> batchnorm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, BatchNormState<T>&, bool); \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, RngState&);                               \
  template Tensor<T> to_sequence(const Tensor<T>&);                                                    \
  template Tensor<T> flatten(const Tensor<T>&);                                                        \
  template Tensor<T> shift_one(const Tensor<T>&);                                                      \
  template Tensor<T> weighted_time_sum(const Tensor<T>&, const Tensor<T>&);

SERDARTS_INSTANTIATE_NN(float)
SERDARTS_INSTANTIATE_NN(double)

#undef SERDARTS_INSTANTIATE_NN

}  // namespace serdarts::nn
