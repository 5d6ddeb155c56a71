#pragma once

#include <cstddef>
#include <string_view>

#include "twrmcae/rng.hpp"
#include "twrmcae/tensor.hpp"

namespace twrmcae::attention {

enum class Mode { train, eval };

/// Coordinate-attention parameters. All convolutions are 1x1 with bias and
/// stored as matrices: mix (R x C), h/w gates (C x R), R = C / reduction.
struct CoordAttnParams {
  std::size_t channels = 3;
  std::size_t reduction = 3;
  Tensor mix_w, mix_b;
  Tensor bn_gamma, bn_beta;
  Tensor h_w, h_b;
  Tensor w_w, w_b;
  // Batch-norm population statistics (not trained by gradient).
  Tensor running_mean, running_var;

  std::size_t reduced() const { return channels / reduction; }

  /// Visits every trainable tensor as f(name, tensor).
  template <class F>
  void visit(F&& f) {
    f("mix_w", mix_w); f("mix_b", mix_b); f("bn_gamma", bn_gamma); f("bn_beta", bn_beta);
    f("h_w", h_w); f("h_b", h_b); f("w_w", w_w); f("w_b", w_b);
  }
  template <class F>
  void visit(F&& f) const {
    f("mix_w", mix_w); f("mix_b", mix_b); f("bn_gamma", bn_gamma); f("bn_beta", bn_beta);
    f("h_w", h_w); f("h_b", h_b); f("w_w", w_w); f("w_b", w_b);
  }
  /// Trainable tensors followed by the two running-statistics buffers.
  template <class F>
  void visit_all(F&& f) {
    visit(f);
    f("running_mean", running_mean); f("running_var", running_var);
  }
  template <class F>
  void visit_all(F&& f) const {
    visit(f);
    f("running_mean", running_mean); f("running_var", running_var);
  }
};

inline constexpr double kBnMomentum = 0.1;
inline constexpr double kBnEpsilon = 1e-5;

/// All-zero parameters with gamma = 1, running stats (0, 1).
CoordAttnParams zero_params(std::size_t channels, std::size_t reduction = 3);
/// Kernels uniform in +-1/sqrt(fan_in). Gate biases start at `gate_bias` so
/// an untrained block passes its input nearly unchanged.
CoordAttnParams init_params(std::size_t channels, std::size_t reduction, Rng& rng,
                            double gate_bias = 6.0);

/// Directional average pooling: z_h is C x H x 1 (mean over W), z_w is C x 1 x W.
struct Pooled {
  Tensor z_h;
  Tensor z_w;
};
Pooled coord_pool(const Tensor& x);

/// Intermediate values kept for the backward pass.
struct Cache {
  RMatrix pooled;     // C x (H+W)
  RMatrix mixed;      // R x (H+W)
  RMatrix xhat;       // normalised mixed
  Eigen::VectorXd batch_mean, batch_var, inv_std;
  RMatrix squashed;   // sigmoid(BN(mixed)), R x (H+W)
  RMatrix gate_h;     // C x H
  RMatrix gate_w;     // C x W
  Mode mode = Mode::train;
};

Tensor forward(const Tensor& x, const CoordAttnParams& p, Mode mode, Cache* cache = nullptr);

/// Reverse mode of forward (train or eval mode, as recorded in the cache).
/// Accumulates parameter gradients into `grads`; returns the input gradient.
Tensor backward(const Tensor& x, const CoordAttnParams& p, const Cache& cache,
                const Tensor& grad_out, CoordAttnParams& grads);

/// running <- (1 - momentum) running + momentum * batch (unbiased variance).
void update_running_stats(CoordAttnParams& p, const Cache& cache);

}  // namespace twrmcae::attention
