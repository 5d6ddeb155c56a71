#include "twrmcae/image.hpp"

#include <algorithm>
#include <cmath>

#include "twrmcae/error.hpp"

namespace twrmcae::image {

RMatrix bilinear_matrix(std::size_t out, std::size_t in) {
  if (out == 0 || in == 0) throw ShapeError("bilinear resize with empty extent");
  RMatrix r = RMatrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t d = 0; d < out; ++d) {
    double s = (static_cast<double>(d) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(s));
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double frac = s - static_cast<double>(i0);
    r(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(i0)) += 1.0 - frac;
    r(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(i1)) += frac;
  }
  return r;
}

namespace {

using MapC = Eigen::Map<const RMatrix>;
using Map = Eigen::Map<RMatrix>;

}  // namespace

Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 3 || x.is_complex()) throw ShapeError("resize expects real C x H x W");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h == out_h && w == out_w) return x;
  const RMatrix rh = bilinear_matrix(out_h, h);
  const RMatrix rw = bilinear_matrix(out_w, w);
  Tensor out({c, out_h, out_w});
  const auto H = static_cast<Eigen::Index>(h), W = static_cast<Eigen::Index>(w);
  const auto OH = static_cast<Eigen::Index>(out_h), OW = static_cast<Eigen::Index>(out_w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    MapC src(x.data() + ch * h * w, H, W);
    Map dst(out.data() + ch * out_h * out_w, OH, OW);
    dst.noalias() = rh * src * rw.transpose();
  }
  return out;
}

Tensor resize_bilinear_adjoint(const Tensor& grad_out, std::size_t in_h, std::size_t in_w) {
  const std::size_t c = grad_out.dim(0), oh = grad_out.dim(1), ow = grad_out.dim(2);
  if (oh == in_h && ow == in_w) return grad_out;
  const RMatrix rh = bilinear_matrix(oh, in_h);
  const RMatrix rw = bilinear_matrix(ow, in_w);
  Tensor out({c, in_h, in_w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    MapC g(grad_out.data() + ch * oh * ow, static_cast<Eigen::Index>(oh),
           static_cast<Eigen::Index>(ow));
    Map dst(out.data() + ch * in_h * in_w, static_cast<Eigen::Index>(in_h),
            static_cast<Eigen::Index>(in_w));
    dst.noalias() = rh.transpose() * g * rw;
  }
  return out;
}

Tensor channel_mean(const Tensor& x) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor out({1, h, w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h * w; ++i) out[i] += x[ch * h * w + i];
  out *= 1.0 / static_cast<double>(c);
  return out;
}

}  // namespace twrmcae::image
