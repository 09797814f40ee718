#pragma once

// Forward/backward kernels for the fixed layer vocabulary. Convolutions are
// cross-correlations lowered to GEMM through im2col, processed in chunks of
// output depth planes so the column buffer stays bounded.

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "e2v/common.hpp"
#include "e2v/tensor.hpp"

namespace e2v {

struct ConvSpec {
  Index in_channels = 1;
  Index out_channels = 1;
  Index3 kernel{1, 1, 1};
  Index3 stride{1, 1, 1};
  Index3 padding{0, 0, 0};

  Index taps() const { return kernel[0] * kernel[1] * kernel[2]; }
  bool pointwise() const {
    return taps() == 1 && stride == Index3{1, 1, 1} && padding == Index3{0, 0, 0};
  }
};

inline Index conv_extent(Index in, Index k, Index s, Index p) {
  const Index span = in + 2 * p - k;
  if (span < 0 || s <= 0) return 0;
  return span / s + 1;
}

inline Index deconv_extent(Index in, Index k, Index s, Index p) { return (in - 1) * s - 2 * p + k; }

inline Index3 conv_output_dims(const Index3& in, const ConvSpec& spec) {
  return {conv_extent(in[0], spec.kernel[0], spec.stride[0], spec.padding[0]),
          conv_extent(in[1], spec.kernel[1], spec.stride[1], spec.padding[1]),
          conv_extent(in[2], spec.kernel[2], spec.stride[2], spec.padding[2])};
}

inline Index3 deconv_output_dims(const Index3& in, const ConvSpec& spec) {
  return {deconv_extent(in[0], spec.kernel[0], spec.stride[0], spec.padding[0]),
          deconv_extent(in[1], spec.kernel[1], spec.stride[1], spec.padding[1]),
          deconv_extent(in[2], spec.kernel[2], spec.stride[2], spec.padding[2])};
}

namespace detail {

/// While non-null, non-smooth layers (relu, max-pool, clamps) fold their
/// branch decisions into this hash. Gradient checkers use it to discard finite
/// differences that straddle a kink.
inline thread_local std::uint64_t* kink_probe = nullptr;

inline void probe_mix(std::uint64_t v) {
  if (kink_probe) *kink_probe = (*kink_probe ^ v) * 0x100000001B3ull + 0x9E3779B97F4A7C15ull;
}

inline void require(bool ok, const char* what, const Shape5& got) {
  if (!ok) throw Error(Errc::ShapeMismatch, std::string(what) + " (got " + got.str() + ")");
}

inline void require_dims(const Index3& dims, const char* what) {
  if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0) {
    throw Error(Errc::ShapeMismatch, std::string(what) + ": non-positive output extent");
  }
}

constexpr Index kColumnBudget = Index{1} << 24;

inline Index planes_per_chunk(Index rows, Index plane) {
  return std::max<Index>(1, kColumnBudget / std::max<Index>(1, rows * plane));
}

/// Gathers input patches for output depth planes [od0, od1) into `cols`
/// (channels*taps rows, one column per output position).
template <typename Scalar>
void im2col(const Scalar* x, Index channels, const Index3& in, const ConvSpec& spec,
            const Index3& out, Index od0, Index od1,
            Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& cols) {
  const auto [kd, kh, kw] = spec.kernel;
  const auto [sd, sh, sw] = spec.stride;
  const auto [pd, ph, pw] = spec.padding;
  const Index plane = out[1] * out[2];
  cols.resize(channels * kd * kh * kw, (od1 - od0) * plane);
  Index row = 0;
  for (Index c = 0; c < channels; ++c) {
    const Scalar* xc = x + c * in[0] * in[1] * in[2];
    for (Index a = 0; a < kd; ++a) {
      for (Index b = 0; b < kh; ++b) {
        for (Index e = 0; e < kw; ++e, ++row) {
          Scalar* dst = cols.row(row).data();
          for (Index od = od0; od < od1; ++od) {
            const Index id = od * sd - pd + a;
            if (id < 0 || id >= in[0]) {
              std::fill(dst, dst + plane, Scalar(0));
              dst += plane;
              continue;
            }
            for (Index oh = 0; oh < out[1]; ++oh) {
              const Index ih = oh * sh - ph + b;
              if (ih < 0 || ih >= in[1]) {
                std::fill(dst, dst + out[2], Scalar(0));
                dst += out[2];
                continue;
              }
              const Scalar* src = xc + (id * in[1] + ih) * in[2];
              for (Index ow = 0; ow < out[2]; ++ow) {
                const Index iw = ow * sw - pw + e;
                *dst++ = (iw >= 0 && iw < in[2]) ? src[iw] : Scalar(0);
              }
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-adds columns back into `x`.
template <typename Scalar, typename Cols>
void col2im(const Cols& cols, Index channels, const Index3& in, const ConvSpec& spec,
            const Index3& out, Index od0, Index od1, Scalar* x) {
  const auto [kd, kh, kw] = spec.kernel;
  const auto [sd, sh, sw] = spec.stride;
  const auto [pd, ph, pw] = spec.padding;
  Index row = 0;
  for (Index c = 0; c < channels; ++c) {
    Scalar* xc = x + c * in[0] * in[1] * in[2];
    for (Index a = 0; a < kd; ++a) {
      for (Index b = 0; b < kh; ++b) {
        for (Index e = 0; e < kw; ++e, ++row) {
          Index col = 0;
          for (Index od = od0; od < od1; ++od) {
            const Index id = od * sd - pd + a;
            if (id < 0 || id >= in[0]) {
              col += out[1] * out[2];
              continue;
            }
            for (Index oh = 0; oh < out[1]; ++oh) {
              const Index ih = oh * sh - ph + b;
              if (ih < 0 || ih >= in[1]) {
                col += out[2];
                continue;
              }
              Scalar* dst = xc + (id * in[1] + ih) * in[2];
              for (Index ow = 0; ow < out[2]; ++ow, ++col) {
                const Index iw = ow * sw - pw + e;
                if (iw >= 0 && iw < in[2]) dst[iw] += cols(row, col);
              }
            }
          }
        }
      }
    }
  }
}

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
Eigen::Map<const RowMat<Scalar>> kernel_matrix(const Tensor5<Scalar>& w) {
  const Shape5& s = w.shape();
  return Eigen::Map<const RowMat<Scalar>>(w.ptr(), s.n, s.c * s.volume());
}

template <typename Scalar>
Eigen::Map<RowMat<Scalar>> kernel_matrix(Tensor5<Scalar>& w) {
  const Shape5& s = w.shape();
  return Eigen::Map<RowMat<Scalar>>(w.ptr(), s.n, s.c * s.volume());
}

template <typename Scalar>
Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> channel_vector(const Tensor5<Scalar>& b) {
  return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(b.ptr(), b.size());
}

template <typename Scalar>
Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> channel_vector(Tensor5<Scalar>& b) {
  return Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(b.ptr(), b.size());
}

}  // namespace detail

/// Kernel layout (out, in, kd, kh, kw); bias has out_channels entries.
template <typename Scalar>
Tensor5<Scalar> conv3d_forward(const Tensor5<Scalar>& x, const Tensor5<Scalar>& weights,
                               const Tensor5<Scalar>& bias, const ConvSpec& spec) {
  const Shape5& xs = x.shape();
  detail::require(xs.c == spec.in_channels, "conv3d input channels", xs);
  detail::require(weights.shape() == Shape5{spec.out_channels, spec.in_channels, spec.kernel[0],
                                            spec.kernel[1], spec.kernel[2]},
                  "conv3d kernel shape", weights.shape());
  detail::require(bias.size() == spec.out_channels, "conv3d bias size", bias.shape());
  const Index3 in = xs.spatial();
  const Index3 out = conv_output_dims(in, spec);
  detail::require_dims(out, "conv3d");

  Tensor5<Scalar> y(Shape5{xs.n, spec.out_channels, out[0], out[1], out[2]});
  const auto wm = detail::kernel_matrix(weights);
  const auto b = detail::channel_vector(bias);
  const Index plane = out[1] * out[2];
  detail::RowMat<Scalar> cols;
  for (Index n = 0; n < xs.n; ++n) {
    auto yn = y.sample(n);
    if (spec.pointwise()) {
      yn.noalias() = wm * x.sample(n);
    } else {
      const Index step = detail::planes_per_chunk(wm.cols(), plane);
      for (Index od0 = 0; od0 < out[0]; od0 += step) {
        const Index od1 = std::min(out[0], od0 + step);
        detail::im2col(x.ptr() + n * xs.c * xs.volume(), xs.c, in, spec, out, od0, od1, cols);
        yn.middleCols(od0 * plane, (od1 - od0) * plane).noalias() = wm * cols;
      }
    }
    yn.colwise() += b;
  }
  return y;
}

/// Accumulates kernel and bias gradients and returns the input gradient.
template <typename Scalar>
Tensor5<Scalar> conv3d_backward(const Tensor5<Scalar>& grad_out, const Tensor5<Scalar>& cached_input,
                                const Tensor5<Scalar>& weights, const ConvSpec& spec,
                                Tensor5<Scalar>& grad_weights, Tensor5<Scalar>& grad_bias) {
  const Shape5& xs = cached_input.shape();
  const Index3 in = xs.spatial();
  const Index3 out = conv_output_dims(in, spec);
  detail::require(grad_out.shape() == Shape5{xs.n, spec.out_channels, out[0], out[1], out[2]},
                  "conv3d grad_out shape", grad_out.shape());
  detail::require(grad_weights.shape() == weights.shape(), "conv3d grad kernel", grad_weights.shape());

  Tensor5<Scalar> gx(xs);
  const auto wm = detail::kernel_matrix(weights);
  auto gw = detail::kernel_matrix(grad_weights);
  auto gb = detail::channel_vector(grad_bias);
  const Index plane = out[1] * out[2];
  detail::RowMat<Scalar> cols, gcols;
  for (Index n = 0; n < xs.n; ++n) {
    const auto gy = grad_out.sample(n);
    gb += gy.rowwise().sum();
    if (spec.pointwise()) {
      gw.noalias() += gy * cached_input.sample(n).transpose();
      gx.sample(n).noalias() = wm.transpose() * gy;
      continue;
    }
    const Index step = detail::planes_per_chunk(wm.cols(), plane);
    for (Index od0 = 0; od0 < out[0]; od0 += step) {
      const Index od1 = std::min(out[0], od0 + step);
      const auto gy_chunk = gy.middleCols(od0 * plane, (od1 - od0) * plane);
      detail::im2col(cached_input.ptr() + n * xs.c * xs.volume(), xs.c, in, spec, out, od0, od1, cols);
      gw.noalias() += gy_chunk * cols.transpose();
      gcols.noalias() = wm.transpose() * gy_chunk;
      detail::col2im(gcols, xs.c, in, spec, out, od0, od1, gx.ptr() + n * xs.c * xs.volume());
    }
  }
  return gx;
}

/// Transposed convolution. Kernel layout (in, out, kd, kh, kw), so the forward
/// pass is the input-adjoint of a conv3d that uses the same kernel tensor.
template <typename Scalar>
Tensor5<Scalar> deconv3d_forward(const Tensor5<Scalar>& x, const Tensor5<Scalar>& weights,
                                 const Tensor5<Scalar>& bias, const ConvSpec& spec) {
  const Shape5& xs = x.shape();
  detail::require(xs.c == spec.in_channels, "deconv3d input channels", xs);
  detail::require(weights.shape() == Shape5{spec.in_channels, spec.out_channels, spec.kernel[0],
                                            spec.kernel[1], spec.kernel[2]},
                  "deconv3d kernel shape", weights.shape());
  detail::require(bias.size() == spec.out_channels, "deconv3d bias size", bias.shape());
  const Index3 small = xs.spatial();
  const Index3 big = deconv_output_dims(small, spec);
  detail::require_dims(big, "deconv3d");
  detail::require(conv_output_dims(big, spec) == small, "deconv3d stride/padding not invertible", xs);

  Tensor5<Scalar> y(Shape5{xs.n, spec.out_channels, big[0], big[1], big[2]});
  const auto wm = detail::kernel_matrix(weights);
  const auto b = detail::channel_vector(bias);
  const Index plane = small[1] * small[2];
  detail::RowMat<Scalar> cols;
  for (Index n = 0; n < xs.n; ++n) {
    const auto xn = x.sample(n);
    const Index step = detail::planes_per_chunk(wm.cols(), plane);
    for (Index od0 = 0; od0 < small[0]; od0 += step) {
      const Index od1 = std::min(small[0], od0 + step);
      cols.noalias() = wm.transpose() * xn.middleCols(od0 * plane, (od1 - od0) * plane);
      detail::col2im(cols, spec.out_channels, big, spec, small, od0, od1,
                     y.ptr() + n * spec.out_channels * y.shape().volume());
    }
    y.sample(n).colwise() += b;
  }
  return y;
}

template <typename Scalar>
Tensor5<Scalar> deconv3d_backward(const Tensor5<Scalar>& grad_out, const Tensor5<Scalar>& cached_input,
                                  const Tensor5<Scalar>& weights, const ConvSpec& spec,
                                  Tensor5<Scalar>& grad_weights, Tensor5<Scalar>& grad_bias) {
  const Shape5& xs = cached_input.shape();
  const Index3 small = xs.spatial();
  const Index3 big = deconv_output_dims(small, spec);
  detail::require(grad_out.shape() == Shape5{xs.n, spec.out_channels, big[0], big[1], big[2]},
                  "deconv3d grad_out shape", grad_out.shape());
  detail::require(grad_weights.shape() == weights.shape(), "deconv3d grad kernel", grad_weights.shape());

  Tensor5<Scalar> gx(xs);
  const auto wm = detail::kernel_matrix(weights);
  auto gw = detail::kernel_matrix(grad_weights);
  auto gb = detail::channel_vector(grad_bias);
  const Index plane = small[1] * small[2];
  const Index big_volume = grad_out.shape().volume();
  detail::RowMat<Scalar> cols;
  for (Index n = 0; n < xs.n; ++n) {
    gb += grad_out.sample(n).rowwise().sum();
    const auto xn = cached_input.sample(n);
    auto gxn = gx.sample(n);
    const Index step = detail::planes_per_chunk(wm.cols(), plane);
    for (Index od0 = 0; od0 < small[0]; od0 += step) {
      const Index od1 = std::min(small[0], od0 + step);
      detail::im2col(grad_out.ptr() + n * spec.out_channels * big_volume, spec.out_channels, big, spec,
                     small, od0, od1, cols);
      const Index c0 = od0 * plane, len = (od1 - od0) * plane;
      gxn.middleCols(c0, len).noalias() = wm * cols;
      gw.noalias() += xn.middleCols(c0, len) * cols.transpose();
    }
  }
  return gx;
}

/// Per-channel statistics gathered by a training-mode normalization pass.
template <typename Scalar>
struct NormCache {
  Tensor5<Scalar> xhat;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> var;  ///< biased batch variance
};

/// Standardizes each channel over (N, D, H, W) with batch statistics.
template <typename Scalar>
Tensor5<Scalar> norm_forward_train(const Tensor5<Scalar>& x, const Tensor5<Scalar>& gain,
                                   const Tensor5<Scalar>& shift, double eps, NormCache<Scalar>& cache) {
  const Shape5& s = x.shape();
  if (s.n * s.volume() == 0) throw Error(Errc::ZeroBatchVolume, "normalization over " + s.str());
  detail::require(gain.size() == s.c && shift.size() == s.c, "norm gain/shift size", gain.shape());
  const Scalar count = static_cast<Scalar>(s.n * s.volume());
  cache.mean.setZero(s.c);
  cache.var.setZero(s.c);
  for (Index n = 0; n < s.n; ++n) cache.mean += x.sample(n).rowwise().sum();
  cache.mean /= count;
  for (Index n = 0; n < s.n; ++n) {
    cache.var += (x.sample(n).colwise() - cache.mean).rowwise().squaredNorm();
  }
  cache.var /= count;
  cache.inv_std = (cache.var.array() + static_cast<Scalar>(eps)).rsqrt().matrix();

  cache.xhat = Tensor5<Scalar>(s);
  Tensor5<Scalar> y(s);
  const auto g = detail::channel_vector(gain).array();
  const auto b = detail::channel_vector(shift);
  for (Index n = 0; n < s.n; ++n) {
    auto xh = cache.xhat.sample(n);
    xh = cache.inv_std.asDiagonal() * (x.sample(n).colwise() - cache.mean);
    y.sample(n) = ((g.matrix()).asDiagonal() * xh).colwise() + b;
  }
  return y;
}

template <typename Scalar>
Tensor5<Scalar> norm_forward_eval(const Tensor5<Scalar>& x, const Tensor5<Scalar>& gain,
                                  const Tensor5<Scalar>& shift, const Tensor5<Scalar>& running_mean,
                                  const Tensor5<Scalar>& running_var, double eps) {
  const Shape5& s = x.shape();
  if (s.n * s.volume() == 0) throw Error(Errc::ZeroBatchVolume, "normalization over " + s.str());
  detail::require(gain.size() == s.c && running_mean.size() == s.c, "norm channel count", gain.shape());
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> scale =
      (detail::channel_vector(gain).array() *
       (detail::channel_vector(running_var).array() + static_cast<Scalar>(eps)).rsqrt())
          .matrix();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> offset =
      (detail::channel_vector(shift).array() - scale.array() * detail::channel_vector(running_mean).array())
          .matrix();
  Tensor5<Scalar> y(s);
  for (Index n = 0; n < s.n; ++n) y.sample(n) = (scale.asDiagonal() * x.sample(n)).colwise() + offset;
  return y;
}

template <typename Scalar>
Tensor5<Scalar> norm_backward(const Tensor5<Scalar>& grad_out, const NormCache<Scalar>& cache,
                              const Tensor5<Scalar>& gain, Tensor5<Scalar>& grad_gain,
                              Tensor5<Scalar>& grad_shift) {
  const Shape5& s = grad_out.shape();
  detail::require(s == cache.xhat.shape(), "norm grad_out shape", s);
  const Scalar count = static_cast<Scalar>(s.n * s.volume());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> sum_g = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(s.c);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> sum_gx = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(s.c);
  for (Index n = 0; n < s.n; ++n) {
    const auto g = grad_out.sample(n);
    sum_g += g.rowwise().sum();
    sum_gx += g.cwiseProduct(cache.xhat.sample(n)).rowwise().sum();
  }
  detail::channel_vector(grad_shift) += sum_g;
  detail::channel_vector(grad_gain) += sum_gx;

  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> k =
      (detail::channel_vector(gain).array() * cache.inv_std.array()).matrix();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean_g = sum_g / count;
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean_gx = sum_gx / count;
  Tensor5<Scalar> gx(s);
  for (Index n = 0; n < s.n; ++n) {
    gx.sample(n) = k.asDiagonal() * ((grad_out.sample(n).colwise() - mean_g) -
                                     mean_gx.asDiagonal() * cache.xhat.sample(n));
  }
  return gx;
}

template <typename Scalar>
Tensor5<Scalar> relu_forward(const Tensor5<Scalar>& x) {
  Tensor5<Scalar> y(x.shape(), x.data().cwiseMax(Scalar(0)));
  if (detail::kink_probe) {
    for (Index i = 0; i < x.size(); ++i) detail::probe_mix(x[i] > Scalar(0) ? 2 * i + 1 : 2 * i);
  }
  return y;
}

/// Gradient passes where the forward input was positive.
template <typename Scalar>
Tensor5<Scalar> relu_backward(const Tensor5<Scalar>& grad_out, const Tensor5<Scalar>& cached_input) {
  detail::require(grad_out.shape() == cached_input.shape(), "relu grad shape", grad_out.shape());
  return Tensor5<Scalar>(grad_out.shape(),
                         (cached_input.data().array() > Scalar(0))
                             .select(grad_out.data(), Scalar(0))
                             .matrix());
}

template <typename Scalar>
Scalar logistic(Scalar v) {
  if (v >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-v));
  const Scalar e = std::exp(v);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Tensor5<Scalar> sigmoid_forward(const Tensor5<Scalar>& x) {
  return Tensor5<Scalar>(x.shape(), x.data().unaryExpr([](Scalar v) { return logistic(v); }));
}

/// Uses the cached forward output s: ds = s (1 - s).
template <typename Scalar>
Tensor5<Scalar> sigmoid_backward(const Tensor5<Scalar>& grad_out, const Tensor5<Scalar>& cached_output) {
  detail::require(grad_out.shape() == cached_output.shape(), "sigmoid grad shape", grad_out.shape());
  const auto s = cached_output.data().array();
  return Tensor5<Scalar>(grad_out.shape(), (grad_out.data().array() * s * (Scalar(1) - s)).matrix());
}

/// Clamp into [lo, hi]; backward passes gradient only where unclamped.
template <typename Scalar>
Tensor5<Scalar> clamp_forward(const Tensor5<Scalar>& x, Scalar lo, Scalar hi) {
  if (detail::kink_probe) {
    for (Index i = 0; i < x.size(); ++i) {
      detail::probe_mix(static_cast<std::uint64_t>(3 * i + (x[i] < lo ? 0 : (x[i] > hi ? 1 : 2))));
    }
  }
  return Tensor5<Scalar>(x.shape(), x.data().cwiseMax(lo).cwiseMin(hi));
}

template <typename Scalar>
Tensor5<Scalar> clamp_backward(const Tensor5<Scalar>& grad_out, const Tensor5<Scalar>& cached_input,
                               Scalar lo, Scalar hi) {
  const auto x = cached_input.data().array();
  return Tensor5<Scalar>(grad_out.shape(),
                         ((x >= lo) && (x <= hi)).select(grad_out.data().array(), Scalar(0)).matrix());
}

/// Max pooling with implicit -inf padding. `argmax` receives, per output
/// cell, the flat input offset that won (first maximum on ties).
template <typename Scalar>
Tensor5<Scalar> maxpool3d_forward(const Tensor5<Scalar>& x, const Index3& kernel, const Index3& stride,
                                  const Index3& padding, std::vector<Index>* argmax = nullptr) {
  const Shape5& s = x.shape();
  ConvSpec geo{s.c, s.c, kernel, stride, padding};
  const Index3 out = conv_output_dims(s.spatial(), geo);
  detail::require_dims(out, "maxpool3d");
  for (int a = 0; a < 3; ++a) {
    if (padding[a] * 2 > kernel[a]) throw Error(Errc::ShapeMismatch, "maxpool3d padding exceeds half kernel");
  }
  Tensor5<Scalar> y(Shape5{s.n, s.c, out[0], out[1], out[2]});
  if (argmax) argmax->assign(static_cast<std::size_t>(y.size()), 0);
  Index o = 0;
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      for (Index od = 0; od < out[0]; ++od) {
        for (Index oh = 0; oh < out[1]; ++oh) {
          for (Index ow = 0; ow < out[2]; ++ow, ++o) {
            Scalar best = -std::numeric_limits<Scalar>::infinity();
            Index where = -1;
            for (Index a = 0; a < kernel[0]; ++a) {
              const Index id = od * stride[0] - padding[0] + a;
              if (id < 0 || id >= s.d) continue;
              for (Index b = 0; b < kernel[1]; ++b) {
                const Index ih = oh * stride[1] - padding[1] + b;
                if (ih < 0 || ih >= s.h) continue;
                for (Index e = 0; e < kernel[2]; ++e) {
                  const Index iw = ow * stride[2] - padding[2] + e;
                  if (iw < 0 || iw >= s.w) continue;
                  const Index off = x.offset(n, c, id, ih, iw);
                  if (where < 0 || x[off] > best) {
                    best = x[off];
                    where = off;
                  }
                }
              }
            }
            y[o] = best;
            if (argmax) (*argmax)[static_cast<std::size_t>(o)] = where;
            detail::probe_mix(static_cast<std::uint64_t>(where) * 0x9E3779B1ull + static_cast<std::uint64_t>(o));
          }
        }
      }
    }
  }
  return y;
}

template <typename Scalar>
Tensor5<Scalar> maxpool3d_backward(const Tensor5<Scalar>& grad_out, const Shape5& input_shape,
                                   const std::vector<Index>& argmax) {
  detail::require(static_cast<std::size_t>(grad_out.size()) == argmax.size(), "maxpool3d grad shape",
                  grad_out.shape());
  Tensor5<Scalar> gx(input_shape);
  for (Index o = 0; o < grad_out.size(); ++o) gx[argmax[static_cast<std::size_t>(o)]] += grad_out[o];
  return gx;
}

/// Nearest-neighbour resampling: target index i reads source floor(i * S / T)
/// along each spatial axis.
template <typename Scalar>
Tensor5<Scalar> adaptive_resize_forward(const Tensor5<Scalar>& x, const Index3& target) {
  const Shape5& s = x.shape();
  detail::require_dims(target, "adaptive_resize");
  if (s.spatial() == target) return x;
  Tensor5<Scalar> y(Shape5{s.n, s.c, target[0], target[1], target[2]});
  Index o = 0;
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      for (Index d = 0; d < target[0]; ++d) {
        const Index sd = d * s.d / target[0];
        for (Index h = 0; h < target[1]; ++h) {
          const Index sh = h * s.h / target[1];
          for (Index w = 0; w < target[2]; ++w, ++o) y[o] = x(n, c, sd, sh, w * s.w / target[2]);
        }
      }
    }
  }
  return y;
}

template <typename Scalar>
Tensor5<Scalar> adaptive_resize_backward(const Tensor5<Scalar>& grad_out, const Shape5& input_shape) {
  const Shape5& t = grad_out.shape();
  detail::require(t.n == input_shape.n && t.c == input_shape.c, "adaptive_resize grad shape", t);
  if (t == input_shape) return grad_out;
  Tensor5<Scalar> gx(input_shape);
  Index o = 0;
  for (Index n = 0; n < t.n; ++n) {
    for (Index c = 0; c < t.c; ++c) {
      for (Index d = 0; d < t.d; ++d) {
        const Index sd = d * input_shape.d / t.d;
        for (Index h = 0; h < t.h; ++h) {
          const Index sh = h * input_shape.h / t.h;
          for (Index w = 0; w < t.w; ++w, ++o) gx(n, c, sd, sh, w * input_shape.w / t.w) += grad_out[o];
        }
      }
    }
  }
  return gx;
}

/// Channel concatenation [a, b].
template <typename Scalar>
Tensor5<Scalar> concat_channels(const Tensor5<Scalar>& a, const Tensor5<Scalar>& b) {
  const Shape5& sa = a.shape();
  const Shape5& sb = b.shape();
  detail::require(sa.n == sb.n && sa.spatial() == sb.spatial(), "concat_skip operand shapes", sb);
  Tensor5<Scalar> y(Shape5{sa.n, sa.c + sb.c, sa.d, sa.h, sa.w});
  for (Index n = 0; n < sa.n; ++n) {
    y.sample(n).topRows(sa.c) = a.sample(n);
    y.sample(n).bottomRows(sb.c) = b.sample(n);
  }
  return y;
}

/// Splits a concatenated gradient back into its two operands.
template <typename Scalar>
std::pair<Tensor5<Scalar>, Tensor5<Scalar>> split_channels(const Tensor5<Scalar>& g, Index first) {
  const Shape5& s = g.shape();
  Tensor5<Scalar> a(Shape5{s.n, first, s.d, s.h, s.w});
  Tensor5<Scalar> b(Shape5{s.n, s.c - first, s.d, s.h, s.w});
  for (Index n = 0; n < s.n; ++n) {
    a.sample(n) = g.sample(n).topRows(first);
    b.sample(n) = g.sample(n).bottomRows(s.c - first);
  }
  return {std::move(a), std::move(b)};
}

}  // namespace e2v
