// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Core>
#include <cmath>
#include <random>

#include "vspp/error.hpp"
#include "vspp/nn/layers.hpp"

namespace vspp::nn {

namespace {

using MatR = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Geometry {
  std::int64_t cin, t, h, w;
  std::int64_t to, ho, wo;
  int kt, kh, kw, st, sh, sw, pt, ph, pw;

  std::int64_t rows() const { return cin * kt * kh * kw; }
  std::int64_t cols() const { return to * ho * wo; }
};

// Unfolds one sample (Cin, T, H, W) into a (Cin*kt*kh*kw, To*Ho*Wo) matrix.
void im2col(const Scalar* x, const Geometry& g, Scalar* cols) {
  const std::int64_t plane = g.ho * g.wo;
  Scalar* dst = cols;
  for (std::int64_t c = 0; c < g.cin; ++c) {
    const Scalar* xc = x + c * g.t * g.h * g.w;
    for (int dt = 0; dt < g.kt; ++dt)
      for (int dh = 0; dh < g.kh; ++dh)
        for (int dw = 0; dw < g.kw; ++dw) {
          for (std::int64_t ot = 0; ot < g.to; ++ot) {
            const std::int64_t it = ot * g.st - g.pt + dt;
            if (it < 0 || it >= g.t) {
              std::fill_n(dst, plane, Scalar{0});
              dst += plane;
              continue;
            }
            for (std::int64_t oh = 0; oh < g.ho; ++oh) {
              const std::int64_t ih = oh * g.sh - g.ph + dh;
              if (ih < 0 || ih >= g.h) {
                std::fill_n(dst, g.wo, Scalar{0});
                dst += g.wo;
                continue;
              }
              const Scalar* row = xc + (it * g.h + ih) * g.w;
              for (std::int64_t ow = 0; ow < g.wo; ++ow) {
                const std::int64_t iw = ow * g.sw - g.pw + dw;
                *dst++ = (iw >= 0 && iw < g.w) ? row[iw] : Scalar{0};
              }
            }
          }
        }
  }
}

// Adjoint of im2col: scatters column gradients back onto the input.
void col2im(const Scalar* cols, const Geometry& g, Scalar* dx) {
  const std::int64_t plane = g.ho * g.wo;
  const Scalar* src = cols;
  for (std::int64_t c = 0; c < g.cin; ++c) {
    Scalar* xc = dx + c * g.t * g.h * g.w;
    for (int dt = 0; dt < g.kt; ++dt)
      for (int dh = 0; dh < g.kh; ++dh)
        for (int dw = 0; dw < g.kw; ++dw) {
          for (std::int64_t ot = 0; ot < g.to; ++ot) {
            const std::int64_t it = ot * g.st - g.pt + dt;
            if (it < 0 || it >= g.t) {
              src += plane;
              continue;
            }
            for (std::int64_t oh = 0; oh < g.ho; ++oh) {
              const std::int64_t ih = oh * g.sh - g.ph + dh;
              if (ih < 0 || ih >= g.h) {
                src += g.wo;
                continue;
              }
              Scalar* row = xc + (it * g.h + ih) * g.w;
              for (std::int64_t ow = 0; ow < g.wo; ++ow, ++src) {
                const std::int64_t iw = ow * g.sw - g.pw + dw;
                if (iw >= 0 && iw < g.w) row[iw] += *src;
              }
            }
          }
        }
  }
}

std::int64_t out_extent(std::int64_t in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

}  // namespace

Conv3d::Conv3d(Conv3dOptions opts) : opts_(opts) {
  if (opts_.in_channels < 1 || opts_.out_channels < 1) throw Error(Errc::InvalidParams, "conv channels must be >= 1");
  for (int i = 0; i < 3; ++i)
    if (opts_.kernel[i] < 1 || opts_.stride[i] < 1 || opts_.padding[i] < 0)
      throw Error(Errc::InvalidParams, "conv kernel/stride must be >= 1 and padding >= 0");
  weight_ = Parameter({opts_.out_channels, opts_.in_channels, opts_.kernel[0], opts_.kernel[1], opts_.kernel[2]});
  if (opts_.bias) bias_ = Parameter({opts_.out_channels});
}

Shape Conv3d::output_shape(const Shape& in) const {
  if (in.size() != 5 || in[1] != opts_.in_channels)
    throw Error(Errc::ShapeMismatch, "conv expects (B, " + std::to_string(opts_.in_channels) + ", T, H, W), got " +
                                         shape_string(in));
  Shape out{in[0], opts_.out_channels, 0, 0, 0};
  for (int i = 0; i < 3; ++i) {
    out[2 + i] = out_extent(in[2 + i], opts_.kernel[i], opts_.stride[i], opts_.padding[i]);
    if (out[2 + i] < 1) throw Error(Errc::ShapeMismatch, "conv input " + shape_string(in) + " smaller than kernel");
  }
  return out;
}

Tensor Conv3d::forward(const Tensor& x, Mode mode) {
  const Shape out_shape = output_shape(x.shape);
  const Geometry g{x.dim(1), x.dim(2), x.dim(3), x.dim(4), out_shape[2], out_shape[3], out_shape[4],
                   opts_.kernel[0], opts_.kernel[1], opts_.kernel[2], opts_.stride[0], opts_.stride[1],
                   opts_.stride[2], opts_.padding[0], opts_.padding[1], opts_.padding[2]};
  Tensor y(out_shape);
  std::vector<Scalar> cols(static_cast<std::size_t>(g.rows() * g.cols()));
  Eigen::Map<const MatR> w(weight_.value.ptr(), opts_.out_channels, g.rows());
  Eigen::Map<const MatR> c(cols.data(), g.rows(), g.cols());
  const std::int64_t in_stride = g.cin * g.t * g.h * g.w;
  const std::int64_t out_stride = opts_.out_channels * g.cols();
  for (std::int64_t b = 0; b < x.dim(0); ++b) {
    im2col(x.ptr() + b * in_stride, g, cols.data());
    Eigen::Map<MatR> yb(y.ptr() + b * out_stride, opts_.out_channels, g.cols());
    yb.noalias() = w * c;
    if (opts_.bias)
      for (int o = 0; o < opts_.out_channels; ++o) yb.row(o).array() += bias_.value[static_cast<std::size_t>(o)];
  }
  if (mode == Mode::Train) input_ = x;
  return y;
}

Tensor Conv3d::backward(const Tensor& grad_out) {
  if (input_.empty()) throw Error(Errc::InvalidParams, "conv backward without a training-mode forward");
  const Tensor& x = input_;
  const Shape out_shape = output_shape(x.shape);
  require_shape(grad_out, out_shape, "conv backward");
  const Geometry g{x.dim(1), x.dim(2), x.dim(3), x.dim(4), out_shape[2], out_shape[3], out_shape[4],
                   opts_.kernel[0], opts_.kernel[1], opts_.kernel[2], opts_.stride[0], opts_.stride[1],
                   opts_.stride[2], opts_.padding[0], opts_.padding[1], opts_.padding[2]};
  Tensor dx(x.shape);
  std::vector<Scalar> cols(static_cast<std::size_t>(g.rows() * g.cols()));
  std::vector<Scalar> dcols(cols.size());
  Eigen::Map<const MatR> w(weight_.value.ptr(), opts_.out_channels, g.rows());
  Eigen::Map<MatR> dw(weight_.grad.ptr(), opts_.out_channels, g.rows());
  Eigen::Map<const MatR> c(cols.data(), g.rows(), g.cols());
  Eigen::Map<MatR> dc(dcols.data(), g.rows(), g.cols());
  const std::int64_t in_stride = g.cin * g.t * g.h * g.w;
  const std::int64_t out_stride = opts_.out_channels * g.cols();
  for (std::int64_t b = 0; b < x.dim(0); ++b) {
    Eigen::Map<const MatR> dy(grad_out.ptr() + b * out_stride, opts_.out_channels, g.cols());
    im2col(x.ptr() + b * in_stride, g, cols.data());
    dw.noalias() += dy * c.transpose();
    dc.noalias() = w.transpose() * dy;
    col2im(dcols.data(), g, dx.ptr() + b * in_stride);
    if (opts_.bias)
      for (int o = 0; o < opts_.out_channels; ++o) bias_.grad[static_cast<std::size_t>(o)] += dy.row(o).sum();
  }
  return dx;
}

void Conv3d::collect_parameters(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + "weight", &weight_});
  if (opts_.bias) out.push_back({prefix + "bias", &bias_});
}

void Conv3d::reset_parameters(Rng& rng) {
  // He initialization, fan-out mode.
  const double fan_out = static_cast<double>(opts_.out_channels) * opts_.kernel[0] * opts_.kernel[1] * opts_.kernel[2];
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_out));
  for (auto& v : weight_.value.data) v = normal(rng);
  if (opts_.bias) bias_.value.fill(0);
}

}  // namespace vspp::nn
