#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "twrmcae/rng.hpp"
#include "twrmcae/tensor.hpp"

namespace twrmcae::lista {

enum class Threshold {
  standard,       // sgn(x) max(|x| - theta, 0)
  paper_literal,  // |x - theta| sgn(x)
};

enum class Encoder {
  pseudo_inverse,  // W_e = pinv(W_d) / L
  transpose,       // W_e = W_d^T / L
};

struct ListaOptions {
  Threshold threshold = Threshold::standard;
  Encoder encoder = Encoder::pseudo_inverse;
  bool untied_s = false;  // learn S directly instead of I - W_d^T W_d
};

double soft_threshold(double x, double theta, Threshold mode = Threshold::standard);

/// One shrinkage layer: 3x3 conv -> fragment-wise (S + W_e) -> threshold
/// -> 3x3 transposed conv. Fragments are non-overlapping patch_h x patch_w
/// tiles of each channel plane, flattened row-major, so W_d is n x n with
/// n = patch_h * patch_w.
struct ListaLayerParams {
  std::size_t channels = 3;
  std::size_t patch_h = 8;
  std::size_t patch_w = 8;
  Tensor theta;              // {1}
  Tensor w_d;                // n x n
  Tensor s_free;             // n x n, only read when ListaOptions::untied_s
  Tensor conv_w, conv_b;     // C x C x 3 x 3, C
  Tensor deconv_w, deconv_b; // C x C x 3 x 3, C

  std::size_t fragment_dim() const { return patch_h * patch_w; }

  template <class F>
  void visit(F&& f) {
    f("theta", theta); f("w_d", w_d); f("s_free", s_free);
    f("conv_w", conv_w); f("conv_b", conv_b); f("deconv_w", deconv_w); f("deconv_b", deconv_b);
  }
  template <class F>
  void visit(F&& f) const {
    f("theta", theta); f("w_d", w_d); f("s_free", s_free);
    f("conv_w", conv_w); f("conv_b", conv_b); f("deconv_w", deconv_w); f("deconv_b", deconv_b);
  }
};

struct ListaStackParams {
  std::vector<ListaLayerParams> layers;
  ListaOptions options;
};

inline constexpr std::size_t kDefaultLayers = 12;

/// Exact identity layer: identity kernels, W_d = I, theta = 0, zero biases.
ListaLayerParams identity_layer(std::size_t channels, std::size_t patch_h, std::size_t patch_w);
/// Identity plus 0.01-scale Gaussian noise on W_d and both kernels, theta = `theta`.
ListaLayerParams init_layer(std::size_t channels, std::size_t patch_h, std::size_t patch_w, Rng& rng,
                            double theta = 0.01);
ListaStackParams identity_stack(std::size_t layers, std::size_t channels, std::size_t patch_h,
                                std::size_t patch_w, ListaOptions options = {});
ListaStackParams init_stack(std::size_t layers, std::size_t channels, std::size_t patch_h,
                            std::size_t patch_w, Rng& rng, ListaOptions options = {});

/// Matrices derived from W_d, recomputed whenever W_d changes.
struct Derived {
  RMatrix encoder;   // W_e
  RMatrix s;         // S
  RMatrix combined;  // S + W_e
  RMatrix pinv;      // pinv(W_d) (pseudo-inverse encoder only)
  double sigma_max = 0.0;
  Eigen::VectorXd u1, v1;  // leading singular pair of W_d
};
Derived derive(const ListaLayerParams& p, const ListaOptions& opts);

/// Fragment matrix (n x count) of a C x H x W tensor and its inverse.
RMatrix to_fragments(const Tensor& x, std::size_t patch_h, std::size_t patch_w);
Tensor from_fragments(const RMatrix& frags, std::size_t c, std::size_t h, std::size_t w,
                      std::size_t patch_h, std::size_t patch_w);

struct LayerCache {
  Tensor input;
  RMatrix pre;     // (S + W_e) * fragments(conv(input))
  RMatrix frags;   // fragments(conv(input))
  Tensor shrunk;   // thresholded result reassembled, deconv input
};

Tensor layer_forward(const Tensor& x, const ListaLayerParams& p, const Derived& d,
                     const ListaOptions& opts, LayerCache* cache = nullptr);
Tensor layer_forward(const Tensor& x, const ListaLayerParams& p, const ListaOptions& opts = {});

/// Reverse mode of one layer. Gradients for theta, W_d (or S), kernels and
/// biases accumulate into `grads`; returns dL/dx. The threshold kink uses
/// subgradient 0.
Tensor layer_backward(const ListaLayerParams& p, const Derived& d, const ListaOptions& opts,
                      const LayerCache& cache, const Tensor& grad_out, ListaLayerParams& grads);

struct StackResult {
  Tensor z;                  // last tap
  std::vector<Tensor> taps;  // one per layer
  std::vector<LayerCache> caches;
};

/// x_1 = x; z_j = layer_j(x_j); x_{j+1} = z_j * inject (elementwise) when
/// `inject` is given, else z_j.
StackResult stack_forward(const Tensor& x, const ListaStackParams& p, const std::vector<Derived>& d,
                          const Tensor* inject, bool keep_caches = true);
StackResult stack_forward(const Tensor& x, const ListaStackParams& p, const Tensor* inject = nullptr);

std::vector<Derived> derive_all(const ListaStackParams& p);

struct StackGrads {
  Tensor input;
  Tensor inject;  // empty when no inject was used
};

/// Reverse mode of stack_forward given dL/d(tap_j) for every layer (empty
/// tensors mean zero). Parameter gradients accumulate into `grads`.
StackGrads stack_backward(const ListaStackParams& p, const std::vector<Derived>& d,
                          const Tensor* inject, const StackResult& fwd,
                          const std::vector<Tensor>& tap_grads, ListaStackParams& grads);

/// Zero tensors shaped like every parameter of `p`.
ListaLayerParams zeros_like(const ListaLayerParams& p);
ListaStackParams zeros_like(const ListaStackParams& p);

}  // namespace twrmcae::lista
