#include "twrmcae/lista.hpp"

#include <cmath>
#include <string>

#include <Eigen/SVD>

#include "twrmcae/error.hpp"
#include "twrmcae/nn.hpp"

namespace twrmcae::lista {

namespace {

using Idx = Eigen::Index;
using MapC = Eigen::Map<const RMatrix>;
using Map = Eigen::Map<RMatrix>;

Idx ix(std::size_t v) { return static_cast<Idx>(v); }

double sgn(double x) { return (x > 0) - (x < 0); }

// d F / d x of the threshold at x (0 at kinks).
double threshold_dx(double x, double theta, Threshold mode) {
  if (mode == Threshold::standard) return std::abs(x) > theta ? 1.0 : 0.0;
  return sgn(x) * sgn(x - theta);
}

double threshold_dtheta(double x, double theta, Threshold mode) {
  if (mode == Threshold::standard) return std::abs(x) > theta ? -sgn(x) : 0.0;
  return -sgn(x) * sgn(x - theta);
}

void add_noise(Tensor& t, Rng& rng, double scale) {
  for (double& v : t.raw()) v += scale * rng.normal();
}

}  // namespace

double soft_threshold(double x, double theta, Threshold mode) {
  if (mode == Threshold::standard) return sgn(x) * std::max(std::abs(x) - theta, 0.0);
  return std::abs(x - theta) * sgn(x);
}

ListaLayerParams identity_layer(std::size_t channels, std::size_t patch_h, std::size_t patch_w) {
  ListaLayerParams p;
  p.channels = channels;
  p.patch_h = patch_h;
  p.patch_w = patch_w;
  const std::size_t n = patch_h * patch_w;
  p.theta = Tensor({1});
  p.w_d = Tensor({n, n});
  for (std::size_t i = 0; i < n; ++i) p.w_d[i * n + i] = 1.0;
  p.s_free = Tensor({n, n});
  p.conv_w = nn::identity_kernel3(channels);
  p.conv_b = Tensor({channels});
  p.deconv_w = nn::identity_kernel3(channels);
  p.deconv_b = Tensor({channels});
  return p;
}

ListaLayerParams init_layer(std::size_t channels, std::size_t patch_h, std::size_t patch_w, Rng& rng,
                            double theta) {
  ListaLayerParams p = identity_layer(channels, patch_h, patch_w);
  p.theta[0] = theta;
  add_noise(p.w_d, rng, 0.01);
  add_noise(p.conv_w, rng, 0.01);
  add_noise(p.deconv_w, rng, 0.01);
  const std::size_t n = p.fragment_dim();
  MapC w(p.w_d.data(), ix(n), ix(n));
  Map(p.s_free.data(), ix(n), ix(n)) = RMatrix::Identity(ix(n), ix(n)) - w.transpose() * w;
  return p;
}

ListaStackParams identity_stack(std::size_t layers, std::size_t channels, std::size_t patch_h,
                                std::size_t patch_w, ListaOptions options) {
  ListaStackParams s;
  s.options = options;
  for (std::size_t j = 0; j < layers; ++j) s.layers.push_back(identity_layer(channels, patch_h, patch_w));
  return s;
}

ListaStackParams init_stack(std::size_t layers, std::size_t channels, std::size_t patch_h,
                            std::size_t patch_w, Rng& rng, ListaOptions options) {
  ListaStackParams s;
  s.options = options;
  for (std::size_t j = 0; j < layers; ++j) s.layers.push_back(init_layer(channels, patch_h, patch_w, rng));
  return s;
}

Derived derive(const ListaLayerParams& p, const ListaOptions& opts) {
  const std::size_t n = p.fragment_dim();
  if (p.w_d.rank() != 2 || p.w_d.dim(0) != n || p.w_d.dim(1) != n)
    throw ShapeError("W_d must be " + std::to_string(n) + " x " + std::to_string(n));
  MapC w(p.w_d.data(), ix(n), ix(n));
  Eigen::JacobiSVD<RMatrix> svd(w, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Derived d;
  const Eigen::VectorXd& sv = svd.singularValues();
  d.sigma_max = sv(0);
  if (!(d.sigma_max > 0)) throw NumericError("W_d is the zero matrix");
  d.u1 = svd.matrixU().col(0);
  d.v1 = svd.matrixV().col(0);
  const double L = d.sigma_max * d.sigma_max;
  if (opts.encoder == Encoder::pseudo_inverse) {
    const double tol = static_cast<double>(n) * sv(0) * std::numeric_limits<double>::epsilon();
    Eigen::VectorXd inv = sv.unaryExpr([tol](double s) { return s > tol ? 1.0 / s : 0.0; });
    d.pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
    d.encoder = d.pinv / L;
  } else {
    d.encoder = w.transpose() / L;
  }
  if (opts.untied_s)
    d.s = MapC(p.s_free.data(), ix(n), ix(n));
  else
    d.s = RMatrix::Identity(ix(n), ix(n)) - w.transpose() * w;
  d.combined = d.s + d.encoder;
  return d;
}

RMatrix to_fragments(const Tensor& x, std::size_t ph, std::size_t pw) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % ph != 0 || w % pw != 0)
    throw ShapeError("image " + std::to_string(h) + "x" + std::to_string(w) +
                     " is not tiled by " + std::to_string(ph) + "x" + std::to_string(pw) + " fragments");
  const std::size_t gy = h / ph, gx = w / pw;
  RMatrix f(ix(ph * pw), ix(c * gy * gx));
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t by = 0; by < gy; ++by)
      for (std::size_t bx = 0; bx < gx; ++bx) {
        const Idx col = ix((ci * gy + by) * gx + bx);
        for (std::size_t i = 0; i < ph; ++i)
          for (std::size_t j = 0; j < pw; ++j) f(ix(i * pw + j), col) = x.at(ci, by * ph + i, bx * pw + j);
      }
  return f;
}

Tensor from_fragments(const RMatrix& frags, std::size_t c, std::size_t h, std::size_t w,
                      std::size_t ph, std::size_t pw) {
  const std::size_t gy = h / ph, gx = w / pw;
  Tensor x({c, h, w});
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t by = 0; by < gy; ++by)
      for (std::size_t bx = 0; bx < gx; ++bx) {
        const Idx col = ix((ci * gy + by) * gx + bx);
        for (std::size_t i = 0; i < ph; ++i)
          for (std::size_t j = 0; j < pw; ++j) x.at(ci, by * ph + i, bx * pw + j) = frags(ix(i * pw + j), col);
      }
  return x;
}

Tensor layer_forward(const Tensor& x, const ListaLayerParams& p, const Derived& d,
                     const ListaOptions& opts, LayerCache* cache) {
  if (x.rank() != 3 || x.dim(0) != p.channels) throw ShapeError("lista layer: channel mismatch");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const Tensor y = nn::conv2d(x, p.conv_w, p.conv_b, 1, 1);
  RMatrix frags = to_fragments(y, p.patch_h, p.patch_w);
  if (d.combined.rows() != frags.rows()) throw ShapeError("lista layer: W_d dimension mismatch");
  RMatrix pre = d.combined * frags;
  const double theta = p.theta[0];
  const RMatrix shrunk_f = pre.unaryExpr([&](double v) { return soft_threshold(v, theta, opts.threshold); });
  Tensor shrunk = from_fragments(shrunk_f, c, h, w, p.patch_h, p.patch_w);
  Tensor out = nn::deconv2d(shrunk, p.deconv_w, p.deconv_b, 1);
  if (cache) {
    cache->input = x;
    cache->frags = std::move(frags);
    cache->pre = std::move(pre);
    cache->shrunk = std::move(shrunk);
  }
  return out;
}

Tensor layer_forward(const Tensor& x, const ListaLayerParams& p, const ListaOptions& opts) {
  return layer_forward(x, p, derive(p, opts), opts, nullptr);
}

Tensor layer_backward(const ListaLayerParams& p, const Derived& d, const ListaOptions& opts,
                      const LayerCache& cache, const Tensor& grad_out, ListaLayerParams& grads) {
  const std::size_t c = cache.input.dim(0), h = cache.input.dim(1), w = cache.input.dim(2);
  const std::size_t n = p.fragment_dim();

  Tensor d_shrunk;
  nn::deconv2d_backward(cache.shrunk, p.deconv_w, 1, grad_out, &d_shrunk, grads.deconv_w, grads.deconv_b);
  const RMatrix d_sf = to_fragments(d_shrunk, p.patch_h, p.patch_w);

  const double theta = p.theta[0];
  RMatrix d_pre(d_sf.rows(), d_sf.cols());
  double d_theta = 0.0;
  for (Idx i = 0; i < d_sf.size(); ++i) {
    const double g = d_sf.data()[i], v = cache.pre.data()[i];
    d_pre.data()[i] = g * threshold_dx(v, theta, opts.threshold);
    d_theta += g * threshold_dtheta(v, theta, opts.threshold);
  }
  grads.theta[0] += d_theta;

  const RMatrix d_comb = d_pre * cache.frags.transpose();
  const RMatrix d_frags = d_comb.rows() > 0 ? RMatrix(d.combined.transpose() * d_pre) : RMatrix();
  const Tensor d_y = from_fragments(d_frags, c, h, w, p.patch_h, p.patch_w);

  MapC wd(p.w_d.data(), ix(n), ix(n));
  Map gw(grads.w_d.data(), ix(n), ix(n));
  if (opts.untied_s) {
    Map(grads.s_free.data(), ix(n), ix(n)) += d_comb;
  } else {
    gw.noalias() -= wd * (d_comb + d_comb.transpose());
  }
  const double s1 = d.sigma_max;
  const RMatrix lead = d.u1 * d.v1.transpose();
  if (opts.encoder == Encoder::pseudo_inverse) {
    const double inner = (d_comb.array() * d.pinv.array()).sum();
    gw.noalias() -= d.pinv.transpose() * d_comb * d.pinv.transpose() / (s1 * s1);
    gw.noalias() -= (2.0 * inner / (s1 * s1 * s1)) * lead;
  } else {
    const double inner = (d_comb.array() * wd.transpose().array()).sum();
    gw.noalias() += d_comb.transpose() / (s1 * s1);
    gw.noalias() -= (2.0 * inner / (s1 * s1 * s1)) * lead;
  }

  Tensor d_x;
  nn::conv2d_backward(cache.input, p.conv_w, 1, 1, d_y, &d_x, grads.conv_w, grads.conv_b);
  return d_x;
}

std::vector<Derived> derive_all(const ListaStackParams& p) {
  std::vector<Derived> d;
  d.reserve(p.layers.size());
  for (const auto& l : p.layers) d.push_back(derive(l, p.options));
  return d;
}

StackResult stack_forward(const Tensor& x, const ListaStackParams& p, const std::vector<Derived>& d,
                          const Tensor* inject, bool keep_caches) {
  if (inject) require_same_shape(x, *inject, "lista inject map");
  StackResult r;
  r.taps.reserve(p.layers.size());
  if (keep_caches) r.caches.resize(p.layers.size());
  Tensor cur = x;
  for (std::size_t j = 0; j < p.layers.size(); ++j) {
    Tensor z = layer_forward(cur, p.layers[j], d[j], p.options, keep_caches ? &r.caches[j] : nullptr);
    cur = inject ? hadamard(z, *inject) : z;
    r.taps.push_back(std::move(z));
  }
  r.z = r.taps.empty() ? x : r.taps.back();
  return r;
}

StackResult stack_forward(const Tensor& x, const ListaStackParams& p, const Tensor* inject) {
  return stack_forward(x, p, derive_all(p), inject, false);
}

StackGrads stack_backward(const ListaStackParams& p, const std::vector<Derived>& d,
                          const Tensor* inject, const StackResult& fwd,
                          const std::vector<Tensor>& tap_grads, ListaStackParams& grads) {
  const std::size_t L = p.layers.size();
  if (fwd.caches.size() != L) throw ShapeError("lista backward needs forward caches");
  StackGrads out;
  if (inject) out.inject = Tensor(inject->shape());
  Tensor g_next;  // dL/dx_{j+1}
  for (std::size_t jj = L; jj-- > 0;) {
    Tensor g_z =
        (jj < tap_grads.size() && tap_grads[jj].numel() > 0) ? tap_grads[jj] : Tensor(fwd.taps[jj].shape());
    if (g_next.numel() > 0) {
      if (inject) {
        g_z += hadamard(g_next, *inject);
        out.inject += hadamard(g_next, fwd.taps[jj]);
      } else {
        g_z += g_next;
      }
    }
    g_next = layer_backward(p.layers[jj], d[jj], p.options, fwd.caches[jj], g_z, grads.layers[jj]);
  }
  out.input = L > 0 ? std::move(g_next) : (tap_grads.empty() ? Tensor() : tap_grads.back());
  return out;
}

ListaLayerParams zeros_like(const ListaLayerParams& p) {
  ListaLayerParams z = p;
  z.visit([](const char*, Tensor& t) { t.fill(0.0); });
  return z;
}

ListaStackParams zeros_like(const ListaStackParams& p) {
  ListaStackParams z = p;
  for (auto& l : z.layers) l = zeros_like(l);
  return z;
}

}  // namespace twrmcae::lista
