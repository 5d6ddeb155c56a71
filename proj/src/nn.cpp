#include "twrmcae/nn.hpp"

#include <cmath>
#include <string>

#include "twrmcae/error.hpp"

namespace twrmcae::nn {

namespace {

using Idx = Eigen::Index;
using MapC = Eigen::Map<const RMatrix>;
using Map = Eigen::Map<RMatrix>;

Idx ix(std::size_t v) { return static_cast<Idx>(v); }

void require_chw(const Tensor& x, const char* what) {
  if (x.rank() != 3 || x.is_complex()) throw ShapeError(std::string(what) + ": expected real C x H x W");
}

}  // namespace

std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (in + 2 * pad < k) throw ShapeError("kernel larger than padded input");
  return (in + 2 * pad - k) / stride + 1;
}

RMatrix im2col(const Tensor& x, std::size_t kh, std::size_t kw, std::size_t stride,
               std::size_t pad) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = conv_out_extent(h, kh, stride, pad), ow = conv_out_extent(w, kw, stride, pad);
  RMatrix cols = RMatrix::Zero(ix(c * kh * kw), ix(oh * ow));
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        double* row = cols.data() + ((ci * kh + ky) * kw + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          const double* src = x.data() + (ci * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto jx = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            if (jx < 0 || jx >= static_cast<std::ptrdiff_t>(w)) continue;
            row[oy * ow + ox] = src[jx];
          }
        }
      }
    }
  }
  return cols;
}

Tensor col2im(const RMatrix& cols, std::size_t c, std::size_t h, std::size_t w, std::size_t kh,
              std::size_t kw, std::size_t stride, std::size_t pad) {
  const std::size_t oh = conv_out_extent(h, kh, stride, pad), ow = conv_out_extent(w, kw, stride, pad);
  if (cols.rows() != ix(c * kh * kw) || cols.cols() != ix(oh * ow)) throw ShapeError("col2im: shape mismatch");
  Tensor x({c, h, w});
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const double* row = cols.data() + ((ci * kh + ky) * kw + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          double* dst = x.data() + (ci * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto jx = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            if (jx < 0 || jx >= static_cast<std::ptrdiff_t>(w)) continue;
            dst[jx] += row[oy * ow + ox];
          }
        }
      }
    }
  }
  return x;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t pad) {
  require_chw(x, "conv2d");
  const std::size_t oc = weight.dim(0), ic = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  if (x.dim(0) != ic) throw ShapeError("conv2d: input channels " + std::to_string(x.dim(0)) +
                                       " != kernel channels " + std::to_string(ic));
  if (bias.numel() != oc) throw ShapeError("conv2d: bias length mismatch");
  const std::size_t oh = conv_out_extent(x.dim(1), kh, stride, pad);
  const std::size_t ow = conv_out_extent(x.dim(2), kw, stride, pad);
  const RMatrix cols = im2col(x, kh, kw, stride, pad);
  Tensor y({oc, oh, ow});
  MapC wmat(weight.data(), ix(oc), ix(ic * kh * kw));
  Map ymat(y.data(), ix(oc), ix(oh * ow));
  ymat.noalias() = wmat * cols;
  for (std::size_t o = 0; o < oc; ++o) ymat.row(ix(o)).array() += bias[o];
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& weight, std::size_t stride, std::size_t pad,
                     const Tensor& grad_y, Tensor* grad_x, Tensor& grad_w, Tensor& grad_b) {
  const std::size_t oc = weight.dim(0), ic = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  const std::size_t ohw = grad_y.dim(1) * grad_y.dim(2);
  const RMatrix cols = im2col(x, kh, kw, stride, pad);
  MapC gy(grad_y.data(), ix(oc), ix(ohw));
  Map gw(grad_w.data(), ix(oc), ix(ic * kh * kw));
  gw.noalias() += gy * cols.transpose();
  for (std::size_t o = 0; o < oc; ++o) grad_b[o] += gy.row(ix(o)).sum();
  if (grad_x) {
    MapC wmat(weight.data(), ix(oc), ix(ic * kh * kw));
    const RMatrix gcols = wmat.transpose() * gy;
    *grad_x = col2im(gcols, ic, x.dim(1), x.dim(2), kh, kw, stride, pad);
  }
}

Tensor deconv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t pad) {
  require_chw(x, "deconv2d");
  const std::size_t ic = weight.dim(0), oc = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  if (x.dim(0) != ic) throw ShapeError("deconv2d: channel mismatch");
  if (bias.numel() != oc) throw ShapeError("deconv2d: bias length mismatch");
  if (kh != 2 * pad + 1 || kw != 2 * pad + 1) throw ShapeError("deconv2d: only same-size stride-1 kernels");
  const std::size_t h = x.dim(1), w = x.dim(2);
  MapC wmat(weight.data(), ix(ic), ix(oc * kh * kw));
  MapC xmat(x.data(), ix(ic), ix(h * w));
  const RMatrix cols = wmat.transpose() * xmat;
  Tensor y = col2im(cols, oc, h, w, kh, kw, 1, pad);
  for (std::size_t o = 0; o < oc; ++o)
    for (std::size_t i = 0; i < h * w; ++i) y[o * h * w + i] += bias[o];
  return y;
}

void deconv2d_backward(const Tensor& x, const Tensor& weight, std::size_t pad,
                       const Tensor& grad_y, Tensor* grad_x, Tensor& grad_w, Tensor& grad_b) {
  const std::size_t ic = weight.dim(0), oc = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  const std::size_t h = x.dim(1), w = x.dim(2);
  const RMatrix gcols = im2col(grad_y, kh, kw, 1, pad);  // (oc*kh*kw) x (h*w)
  MapC xmat(x.data(), ix(ic), ix(h * w));
  Map gw(grad_w.data(), ix(ic), ix(oc * kh * kw));
  gw.noalias() += xmat * gcols.transpose();
  for (std::size_t o = 0; o < oc; ++o) {
    double s = 0.0;
    for (std::size_t i = 0; i < h * w; ++i) s += grad_y[o * h * w + i];
    grad_b[o] += s;
  }
  if (grad_x) {
    MapC wmat(weight.data(), ix(ic), ix(oc * kh * kw));
    Tensor gx({ic, h, w});
    Map(gx.data(), ix(ic), ix(h * w)).noalias() = wmat * gcols;
    *grad_x = std::move(gx);
  }
}

Tensor maxpool2d(const Tensor& x, std::size_t k, std::size_t stride, std::vector<std::size_t>* argmax) {
  require_chw(x, "maxpool2d");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = conv_out_extent(h, k, stride, 0), ow = conv_out_extent(w, k, stride, 0);
  Tensor y({c, oh, ow});
  if (argmax) argmax->assign(c * oh * ow, 0);
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (ci * h + oy * stride) * w + ox * stride;
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::size_t idx = (ci * h + oy * stride + ky) * w + ox * stride + kx;
            if (x[idx] > x[best]) best = idx;
          }
        const std::size_t o = (ci * oh + oy) * ow + ox;
        y[o] = x[best];
        if (argmax) (*argmax)[o] = best;
      }
    }
  }
  return y;
}

Tensor maxpool2d_backward(const Tensor& grad_y, const std::vector<std::size_t>& argmax,
                          const Shape& input_shape) {
  Tensor gx(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += grad_y[o];
  return gx;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return x > 30 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const std::size_t out = weight.dim(0), in = weight.dim(1);
  if (x.numel() != in) throw ShapeError("linear: input length " + std::to_string(x.numel()) +
                                        " != " + std::to_string(in));
  Tensor y({out});
  MapC wmat(weight.data(), ix(out), ix(in));
  Eigen::Map<const Eigen::VectorXd> xv(x.data(), ix(in));
  Eigen::Map<Eigen::VectorXd> yv(y.data(), ix(out));
  yv.noalias() = wmat * xv;
  for (std::size_t o = 0; o < out; ++o) y[o] += bias[o];
  return y;
}

void linear_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_y, Tensor* grad_x,
                     Tensor& grad_w, Tensor& grad_b) {
  const std::size_t out = weight.dim(0), in = weight.dim(1);
  Eigen::Map<const Eigen::VectorXd> xv(x.data(), ix(in));
  Eigen::Map<const Eigen::VectorXd> gy(grad_y.data(), ix(out));
  Map(grad_w.data(), ix(out), ix(in)).noalias() += gy * xv.transpose();
  for (std::size_t o = 0; o < out; ++o) grad_b[o] += grad_y[o];
  if (grad_x) {
    Tensor gx(x.shape());
    Eigen::Map<Eigen::VectorXd>(gx.data(), ix(in)).noalias() =
        MapC(weight.data(), ix(out), ix(in)).transpose() * gy;
    *grad_x = std::move(gx);
  }
}

Tensor identity_kernel3(std::size_t channels) {
  Tensor k({channels, channels, 3, 3});
  for (std::size_t c = 0; c < channels; ++c) k[((c * channels + c) * 3 + 1) * 3 + 1] = 1.0;
  return k;
}

}  // namespace twrmcae::nn
