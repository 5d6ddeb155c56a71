#pragma once

#include <cstddef>

#include "twrmcae/tensor.hpp"

namespace twrmcae::image {

/// out x in interpolation matrix for bilinear resampling with half-pixel
/// centres (source coordinate (d + 0.5) * in / out - 0.5, clamped to the edge).
/// Rows sum to one, so constants are preserved.
RMatrix bilinear_matrix(std::size_t out, std::size_t in);

/// Resizes every channel of a C x H x W tensor to C x out_h x out_w.
Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);
/// Adjoint of resize_bilinear: maps a gradient on the resized tensor back to
/// the C x in_h x in_w source.
Tensor resize_bilinear_adjoint(const Tensor& grad_out, std::size_t in_h, std::size_t in_w);

/// C x H x W mean over channels, producing 1 x H x W.
Tensor channel_mean(const Tensor& x);

}  // namespace twrmcae::image
