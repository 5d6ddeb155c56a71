#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "twrmcae/rng.hpp"
#include "twrmcae/tensor.hpp"

namespace twrmcae::adaptweight {

struct ConvSpec {
  std::size_t out_channels;
  std::size_t kernel;
  std::size_t stride;
  std::size_t pad;
  std::size_t pool_kernel;  // 0 = no pooling after this layer
  std::size_t pool_stride;
};

/// Layer geometry of the eight-layer scoring CNN (five conv + three fc).
struct CnnProfile {
  std::string name;
  std::size_t input_size = 227;
  std::size_t input_channels = 3;
  std::array<ConvSpec, 5> convs{};
  std::array<std::size_t, 2> fc_hidden{256, 64};
};

/// AlexNet-shaped layers on a 227 x 227 x 3 input.
CnnProfile paper227();
/// 64 x 64 input, conv widths divided by four; last pool is 2x2 so the chain ends at 1 x 1.
CnnProfile desk64();
CnnProfile profile_by_name(const std::string& name);

/// Spatial extent after every conv (pre-pool) and pool stage, for shape checks.
struct LayerShapes {
  std::array<std::array<std::size_t, 3>, 5> conv_out{};  // C, H, W
  std::array<std::array<std::size_t, 3>, 5> pool_out{};
  std::size_t flat = 0;
};
LayerShapes layer_shapes(const CnnProfile& profile);

struct WeightCnnParams {
  CnnProfile profile;
  std::size_t out_channels = 3;  // channels of the inject map
  std::array<Tensor, 5> conv_w, conv_b;
  std::array<Tensor, 3> fc_w, fc_b;
  Tensor inject_w, inject_b;  // C x conv5_channels, C

  template <class F>
  void visit(F&& f) {
    static const char* kConvW[] = {"conv1_w", "conv2_w", "conv3_w", "conv4_w", "conv5_w"};
    static const char* kConvB[] = {"conv1_b", "conv2_b", "conv3_b", "conv4_b", "conv5_b"};
    static const char* kFcW[] = {"fc6_w", "fc7_w", "fc8_w"};
    static const char* kFcB[] = {"fc6_b", "fc7_b", "fc8_b"};
    for (std::size_t l = 0; l < 5; ++l) { f(kConvW[l], conv_w[l]); f(kConvB[l], conv_b[l]); }
    for (std::size_t l = 0; l < 3; ++l) { f(kFcW[l], fc_w[l]); f(kFcB[l], fc_b[l]); }
    f("inject_w", inject_w); f("inject_b", inject_b);
  }
  template <class F>
  void visit(F&& f) const {
    const_cast<WeightCnnParams*>(this)->visit(
        [&](const char* name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
  }
};

WeightCnnParams zero_params(const CnnProfile& profile, std::size_t out_channels = 3);
/// Kernels uniform in +-1/sqrt(fan_in); small positive conv/fc biases keep
/// ReLUs alive; the inject projection bias starts at `inject_bias` so the
/// inject map starts close to one.
WeightCnnParams init_params(const CnnProfile& profile, std::size_t out_channels, Rng& rng,
                            double inject_bias = 8.0);
WeightCnnParams zeros_like(const WeightCnnParams& p);

struct CnnCache {
  Tensor input;
  std::array<Tensor, 5> conv_in, conv_pre, conv_act;
  std::array<std::vector<std::size_t>, 5> pool_argmax;
  std::array<Tensor, 3> fc_in, fc_pre;
};

struct CnnOutput {
  double q = 0.0;      // softplus score, >= 0
  Tensor conv5_map;    // ReLU(conv5), before pooling
};

/// Scores an image already at profile input size (C x S x S).
CnnOutput forward(const Tensor& image, const WeightCnnParams& p, CnnCache* cache = nullptr);

/// Gradients of the q head and the conv5 tap; returns dL/d(image).
Tensor backward(const WeightCnnParams& p, const CnnCache& cache, double grad_q,
                const Tensor* grad_conv5, WeightCnnParams& grads);

struct InjectCache {
  Tensor conv5;
  Tensor gate;  // sigmoid(projection), conv5 spatial size
};

/// 1x1 projection to `out_channels`, sigmoid, bilinear resize to h x w.
Tensor build_inject_map(const Tensor& conv5_map, const WeightCnnParams& p, std::size_t h,
                        std::size_t w, InjectCache* cache = nullptr);
/// Returns dL/d(conv5_map) and accumulates inject projection gradients.
Tensor inject_backward(const WeightCnnParams& p, const InjectCache& cache, const Tensor& grad_map,
                       WeightCnnParams& grads);

struct LinkWeights {
  std::array<double, 3> z{1.0 / 3, 1.0 / 3, 1.0 / 3};
};

/// Only there to make the all-zero triple well defined; small enough that
/// non-degenerate triples stay within 1e-12 of q_i / sum(q).
inline constexpr double kWeightEpsilon = 1e-13;

/// z_i = (q_i + eps) / (sum q + 3 eps). Negative q throws ValueError.
LinkWeights normalize_weights(const std::array<double, 3>& q);
/// dL/dq from dL/dz through normalize_weights.
std::array<double, 3> normalize_weights_backward(const std::array<double, 3>& q,
                                                 const std::array<double, 3>& grad_z);

}  // namespace twrmcae::adaptweight
