#pragma once

#include <cstddef>
#include <vector>

#include "twrmcae/tensor.hpp"

// Dense building blocks shared by the attention, LISTA and weight-CNN
// modules. Tensors are real C x H x W; convolution weights are
// out x in x kh x kw (transposed convolution: in x out x kh x kw).
// Backward functions accumulate (+=) into parameter gradients and
// overwrite input gradients.
namespace twrmcae::nn {

std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad);

/// im2col: (C*kh*kw) x (oh*ow) patch matrix.
RMatrix im2col(const Tensor& x, std::size_t kh, std::size_t kw, std::size_t stride,
               std::size_t pad);
/// Adjoint of im2col, producing a C x H x W tensor.
Tensor col2im(const RMatrix& cols, std::size_t c, std::size_t h, std::size_t w, std::size_t kh,
              std::size_t kw, std::size_t stride, std::size_t pad);

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t pad);
void conv2d_backward(const Tensor& x, const Tensor& weight, std::size_t stride, std::size_t pad,
                     const Tensor& grad_y, Tensor* grad_x, Tensor& grad_w, Tensor& grad_b);

/// Stride-1 transposed convolution with padding `pad`.
Tensor deconv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t pad);
void deconv2d_backward(const Tensor& x, const Tensor& weight, std::size_t pad,
                       const Tensor& grad_y, Tensor* grad_x, Tensor& grad_w, Tensor& grad_b);

/// Max pooling without padding. `argmax` receives the flat input index of
/// each output (first maximum wins ties).
Tensor maxpool2d(const Tensor& x, std::size_t k, std::size_t stride,
                 std::vector<std::size_t>* argmax = nullptr);
Tensor maxpool2d_backward(const Tensor& grad_y, const std::vector<std::size_t>& argmax,
                          const Shape& input_shape);

double sigmoid(double x);
double softplus(double x);

/// y = W x + b for W (out x in), x flattened.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
void linear_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_y, Tensor* grad_x,
                     Tensor& grad_w, Tensor& grad_b);

/// 3x3 identity kernel (channels x channels x 3 x 3) for either convolution layout.
Tensor identity_kernel3(std::size_t channels);

}  // namespace twrmcae::nn
