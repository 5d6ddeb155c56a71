#include "twrmcae/attention.hpp"

#include <cmath>
#include <string>

#include "twrmcae/error.hpp"
#include "twrmcae/nn.hpp"

namespace twrmcae::attention {

namespace {

using Idx = Eigen::Index;
using MapC = Eigen::Map<const RMatrix>;
using Map = Eigen::Map<RMatrix>;

Idx ix(std::size_t v) { return static_cast<Idx>(v); }

Eigen::ArrayXXd sigmoid(const RMatrix& m) {
  return m.unaryExpr([](double v) { return nn::sigmoid(v); }).array();
}

void check(const Tensor& x, const CoordAttnParams& p) {
  if (x.rank() != 3 || x.is_complex()) throw ShapeError("coord attention expects real C x H x W");
  if (x.dim(0) != p.channels)
    throw ShapeError("coord attention: input has " + std::to_string(x.dim(0)) +
                     " channels, parameters expect " + std::to_string(p.channels));
}

}  // namespace

CoordAttnParams zero_params(std::size_t channels, std::size_t reduction) {
  if (reduction == 0 || channels % reduction != 0)
    throw ShapeError("channels must be divisible by the reduction ratio");
  CoordAttnParams p;
  p.channels = channels;
  p.reduction = reduction;
  const std::size_t r = channels / reduction;
  p.mix_w = Tensor({r, channels});
  p.mix_b = Tensor({r});
  p.bn_gamma = Tensor::filled({r}, 1.0);
  p.bn_beta = Tensor({r});
  p.h_w = Tensor({channels, r});
  p.h_b = Tensor({channels});
  p.w_w = Tensor({channels, r});
  p.w_b = Tensor({channels});
  p.running_mean = Tensor({r});
  p.running_var = Tensor::filled({r}, 1.0);
  return p;
}

CoordAttnParams init_params(std::size_t channels, std::size_t reduction, Rng& rng, double gate_bias) {
  CoordAttnParams p = zero_params(channels, reduction);
  auto fill_uniform = [&](Tensor& t, double fan_in) {
    const double b = 1.0 / std::sqrt(fan_in);
    for (double& v : t.raw()) v = rng.uniform(-b, b);
  };
  const auto r = static_cast<double>(p.reduced());
  fill_uniform(p.mix_w, static_cast<double>(channels));
  fill_uniform(p.mix_b, static_cast<double>(channels));
  fill_uniform(p.h_w, r);
  fill_uniform(p.w_w, r);
  p.h_b.fill(gate_bias);
  p.w_b.fill(gate_bias);
  return p;
}

Pooled coord_pool(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("coord_pool expects C x H x W");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h == 0 || w == 0) throw ShapeError("coord_pool needs H, W >= 1");
  Pooled out{Tensor({c, h, 1}), Tensor({c, 1, w})};
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double v = x.at(ci, i, j);
        out.z_h.at(ci, i, 0) += v;
        out.z_w.at(ci, 0, j) += v;
      }
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t i = 0; i < h; ++i) out.z_h.at(ci, i, 0) /= static_cast<double>(w);
    for (std::size_t j = 0; j < w; ++j) out.z_w.at(ci, 0, j) /= static_cast<double>(h);
  }
  return out;
}

Tensor forward(const Tensor& x, const CoordAttnParams& p, Mode mode, Cache* cache) {
  check(x, p);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), r = p.reduced();
  const std::size_t len = h + w;

  const Pooled pooled = coord_pool(x);
  RMatrix cat(ix(c), ix(len));
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t i = 0; i < h; ++i) cat(ix(ci), ix(i)) = pooled.z_h.at(ci, i, 0);
    for (std::size_t j = 0; j < w; ++j) cat(ix(ci), ix(h + j)) = pooled.z_w.at(ci, 0, j);
  }

  RMatrix mixed = MapC(p.mix_w.data(), ix(r), ix(c)) * cat;
  for (std::size_t k = 0; k < r; ++k) mixed.row(ix(k)).array() += p.mix_b[k];

  Eigen::VectorXd mean(ix(r)), var(ix(r)), inv_std(ix(r));
  for (std::size_t k = 0; k < r; ++k) {
    if (mode == Mode::train) {
      mean(ix(k)) = mixed.row(ix(k)).mean();
      var(ix(k)) = (mixed.row(ix(k)).array() - mean(ix(k))).square().mean();
    } else {
      mean(ix(k)) = p.running_mean[k];
      var(ix(k)) = p.running_var[k];
    }
    inv_std(ix(k)) = 1.0 / std::sqrt(var(ix(k)) + kBnEpsilon);
  }
  RMatrix xhat(ix(r), ix(len));
  RMatrix bn(ix(r), ix(len));
  for (std::size_t k = 0; k < r; ++k) {
    xhat.row(ix(k)) = (mixed.row(ix(k)).array() - mean(ix(k))) * inv_std(ix(k));
    bn.row(ix(k)) = xhat.row(ix(k)).array() * p.bn_gamma[k] + p.bn_beta[k];
  }
  const RMatrix squashed = sigmoid(bn).matrix();

  RMatrix pre_h = MapC(p.h_w.data(), ix(c), ix(r)) * squashed.leftCols(ix(h));
  RMatrix pre_w = MapC(p.w_w.data(), ix(c), ix(r)) * squashed.rightCols(ix(w));
  for (std::size_t ci = 0; ci < c; ++ci) {
    pre_h.row(ix(ci)).array() += p.h_b[ci];
    pre_w.row(ix(ci)).array() += p.w_b[ci];
  }
  const RMatrix gate_h = sigmoid(pre_h).matrix();
  const RMatrix gate_w = sigmoid(pre_w).matrix();

  Tensor out({c, h, w});
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        out.at(ci, i, j) = x.at(ci, i, j) * gate_h(ix(ci), ix(i)) * gate_w(ix(ci), ix(j));

  if (cache) {
    cache->pooled = std::move(cat);
    cache->mixed = std::move(mixed);
    cache->xhat = std::move(xhat);
    cache->batch_mean = std::move(mean);
    cache->batch_var = std::move(var);
    cache->inv_std = std::move(inv_std);
    cache->squashed = squashed;
    cache->gate_h = gate_h;
    cache->gate_w = gate_w;
    cache->mode = mode;
  }
  return out;
}

Tensor backward(const Tensor& x, const CoordAttnParams& p, const Cache& cache,
                const Tensor& grad_out, CoordAttnParams& grads) {
  check(x, p);
  require_same_shape(x, grad_out, "coord attention backward");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), r = p.reduced();
  const std::size_t len = h + w;
  const RMatrix& gh = cache.gate_h;
  const RMatrix& gw = cache.gate_w;

  Tensor grad_x({c, h, w});
  RMatrix d_gh = RMatrix::Zero(ix(c), ix(h));
  RMatrix d_gw = RMatrix::Zero(ix(c), ix(w));
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double g = grad_out.at(ci, i, j);
        const double xv = x.at(ci, i, j);
        grad_x.at(ci, i, j) = g * gh(ix(ci), ix(i)) * gw(ix(ci), ix(j));
        d_gh(ix(ci), ix(i)) += g * xv * gw(ix(ci), ix(j));
        d_gw(ix(ci), ix(j)) += g * xv * gh(ix(ci), ix(i));
      }

  const RMatrix d_pre_h = (d_gh.array() * gh.array() * (1.0 - gh.array())).matrix();
  const RMatrix d_pre_w = (d_gw.array() * gw.array() * (1.0 - gw.array())).matrix();
  const auto sq_h = cache.squashed.leftCols(ix(h));
  const auto sq_w = cache.squashed.rightCols(ix(w));
  Map(grads.h_w.data(), ix(c), ix(r)).noalias() += d_pre_h * sq_h.transpose();
  Map(grads.w_w.data(), ix(c), ix(r)).noalias() += d_pre_w * sq_w.transpose();
  for (std::size_t ci = 0; ci < c; ++ci) {
    grads.h_b[ci] += d_pre_h.row(ix(ci)).sum();
    grads.w_b[ci] += d_pre_w.row(ix(ci)).sum();
  }

  RMatrix d_sq(ix(r), ix(len));
  d_sq.leftCols(ix(h)) = MapC(p.h_w.data(), ix(c), ix(r)).transpose() * d_pre_h;
  d_sq.rightCols(ix(w)) = MapC(p.w_w.data(), ix(c), ix(r)).transpose() * d_pre_w;
  const RMatrix d_bn =
      (d_sq.array() * cache.squashed.array() * (1.0 - cache.squashed.array())).matrix();

  RMatrix d_mixed(ix(r), ix(len));
  const double n = static_cast<double>(len);
  for (std::size_t k = 0; k < r; ++k) {
    const auto row = d_bn.row(ix(k)).array();
    const auto xh = cache.xhat.row(ix(k)).array();
    grads.bn_gamma[k] += (row * xh).sum();
    grads.bn_beta[k] += row.sum();
    const Eigen::ArrayXXd g = row * p.bn_gamma[k];
    if (cache.mode == Mode::train) {
      d_mixed.row(ix(k)) =
          (cache.inv_std(ix(k)) / n) * (n * g - g.sum() - xh * (g * xh).sum());
    } else {
      d_mixed.row(ix(k)) = g * cache.inv_std(ix(k));
    }
  }

  Map(grads.mix_w.data(), ix(r), ix(c)).noalias() += d_mixed * cache.pooled.transpose();
  for (std::size_t k = 0; k < r; ++k) grads.mix_b[k] += d_mixed.row(ix(k)).sum();
  const RMatrix d_cat = MapC(p.mix_w.data(), ix(r), ix(c)).transpose() * d_mixed;

  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        grad_x.at(ci, i, j) += d_cat(ix(ci), ix(i)) / static_cast<double>(w) +
                               d_cat(ix(ci), ix(h + j)) / static_cast<double>(h);
  return grad_x;
}

void update_running_stats(CoordAttnParams& p, const Cache& cache) {
  const std::size_t r = p.reduced();
  const double n = static_cast<double>(cache.mixed.cols());
  const double unbias = n > 1 ? n / (n - 1) : 1.0;
  for (std::size_t k = 0; k < r; ++k) {
    p.running_mean[k] = (1 - kBnMomentum) * p.running_mean[k] + kBnMomentum * cache.batch_mean(ix(k));
    p.running_var[k] =
        (1 - kBnMomentum) * p.running_var[k] + kBnMomentum * cache.batch_var(ix(k)) * unbias;
  }
}

}  // namespace twrmcae::attention
