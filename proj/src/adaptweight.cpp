#include "twrmcae/adaptweight.hpp"

#include <cmath>

#include "twrmcae/error.hpp"
#include "twrmcae/image.hpp"
#include "twrmcae/nn.hpp"

namespace twrmcae::adaptweight {

namespace {

using Idx = Eigen::Index;

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.raw()) v = v > 0 ? v : 0.0;
  return y;
}

// grad * 1[pre > 0]
Tensor relu_backward(const Tensor& pre, const Tensor& grad) {
  Tensor g = grad;
  for (std::size_t i = 0; i < g.raw().size(); ++i)
    if (!(pre[i] > 0)) g[i] = 0.0;
  return g;
}

double sigmoid_d(double s) { return s * (1.0 - s); }

}  // namespace

CnnProfile paper227() {
  CnnProfile p;
  p.name = "paper227";
  p.input_size = 227;
  p.convs = {ConvSpec{96, 11, 4, 0, 3, 2}, ConvSpec{256, 5, 1, 2, 3, 2}, ConvSpec{384, 3, 1, 1, 0, 0},
             ConvSpec{384, 3, 1, 1, 0, 0}, ConvSpec{256, 3, 1, 1, 3, 2}};
  p.fc_hidden = {256, 64};
  return p;
}

CnnProfile desk64() {
  CnnProfile p;
  p.name = "desk64";
  p.input_size = 64;
  p.convs = {ConvSpec{24, 11, 4, 0, 3, 2}, ConvSpec{64, 5, 1, 2, 3, 2}, ConvSpec{96, 3, 1, 1, 0, 0},
             ConvSpec{96, 3, 1, 1, 0, 0}, ConvSpec{64, 3, 1, 1, 2, 2}};
  p.fc_hidden = {256, 64};
  return p;
}

CnnProfile profile_by_name(const std::string& name) {
  if (name == "paper227") return paper227();
  if (name == "desk64") return desk64();
  throw ValueError("unknown CNN profile: " + name);
}

LayerShapes layer_shapes(const CnnProfile& profile) {
  LayerShapes s;
  std::size_t c = profile.input_channels, h = profile.input_size, w = profile.input_size;
  for (std::size_t l = 0; l < 5; ++l) {
    const ConvSpec& cs = profile.convs[l];
    h = nn::conv_out_extent(h, cs.kernel, cs.stride, cs.pad);
    w = nn::conv_out_extent(w, cs.kernel, cs.stride, cs.pad);
    c = cs.out_channels;
    s.conv_out[l] = {c, h, w};
    if (cs.pool_kernel > 0) {
      h = nn::conv_out_extent(h, cs.pool_kernel, cs.pool_stride, 0);
      w = nn::conv_out_extent(w, cs.pool_kernel, cs.pool_stride, 0);
    }
    s.pool_out[l] = {c, h, w};
  }
  s.flat = c * h * w;
  return s;
}

WeightCnnParams zero_params(const CnnProfile& profile, std::size_t out_channels) {
  WeightCnnParams p;
  p.profile = profile;
  p.out_channels = out_channels;
  std::size_t in_c = profile.input_channels;
  for (std::size_t l = 0; l < 5; ++l) {
    const ConvSpec& cs = profile.convs[l];
    p.conv_w[l] = Tensor({cs.out_channels, in_c, cs.kernel, cs.kernel});
    p.conv_b[l] = Tensor({cs.out_channels});
    in_c = cs.out_channels;
  }
  const std::array<std::size_t, 4> widths{layer_shapes(profile).flat, profile.fc_hidden[0],
                                          profile.fc_hidden[1], 1};
  for (std::size_t l = 0; l < 3; ++l) {
    p.fc_w[l] = Tensor({widths[l + 1], widths[l]});
    p.fc_b[l] = Tensor({widths[l + 1]});
  }
  p.inject_w = Tensor({out_channels, profile.convs[4].out_channels});
  p.inject_b = Tensor({out_channels});
  return p;
}

WeightCnnParams init_params(const CnnProfile& profile, std::size_t out_channels, Rng& rng,
                            double inject_bias) {
  WeightCnnParams p = zero_params(profile, out_channels);
  auto fill = [&](Tensor& t, std::size_t fan_in) {
    const double b = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.raw()) v = rng.uniform(-b, b);
  };
  for (std::size_t l = 0; l < 5; ++l) {
    const Tensor& w = p.conv_w[l];
    fill(p.conv_w[l], w.dim(1) * w.dim(2) * w.dim(3));
    for (double& v : p.conv_b[l].raw()) v = rng.uniform(0.0, 0.02);
  }
  for (std::size_t l = 0; l < 3; ++l) {
    fill(p.fc_w[l], p.fc_w[l].dim(1));
    for (double& v : p.fc_b[l].raw()) v = rng.uniform(0.0, 0.02);
  }
  fill(p.inject_w, p.inject_w.dim(1));
  p.inject_b.fill(inject_bias);
  return p;
}

WeightCnnParams zeros_like(const WeightCnnParams& p) {
  WeightCnnParams z = p;
  z.visit([](const char*, Tensor& t) { t.fill(0.0); });
  return z;
}

CnnOutput forward(const Tensor& image, const WeightCnnParams& p, CnnCache* cache) {
  const CnnProfile& prof = p.profile;
  if (image.rank() != 3 || image.dim(0) != prof.input_channels || image.dim(1) != prof.input_size ||
      image.dim(2) != prof.input_size) {
    throw ShapeError("weight CNN '" + prof.name + "' expects " + std::to_string(prof.input_channels) +
                     " x " + std::to_string(prof.input_size) + " x " + std::to_string(prof.input_size));
  }
  CnnCache local;
  CnnCache& c = cache ? *cache : local;
  c.input = image;
  Tensor cur = image;
  CnnOutput out;
  for (std::size_t l = 0; l < 5; ++l) {
    const ConvSpec& cs = prof.convs[l];
    c.conv_in[l] = cur;
    c.conv_pre[l] = nn::conv2d(cur, p.conv_w[l], p.conv_b[l], cs.stride, cs.pad);
    c.conv_act[l] = relu(c.conv_pre[l]);
    if (l == 4) out.conv5_map = c.conv_act[l];
    cur = cs.pool_kernel > 0 ? nn::maxpool2d(c.conv_act[l], cs.pool_kernel, cs.pool_stride, &c.pool_argmax[l])
                             : c.conv_act[l];
  }
  for (std::size_t l = 0; l < 3; ++l) {
    c.fc_in[l] = cur;
    c.fc_pre[l] = nn::linear(cur, p.fc_w[l], p.fc_b[l]);
    cur = l < 2 ? relu(c.fc_pre[l]) : c.fc_pre[l];
  }
  out.q = nn::softplus(c.fc_pre[2][0]);
  return out;
}

Tensor backward(const WeightCnnParams& p, const CnnCache& c, double grad_q, const Tensor* grad_conv5,
                WeightCnnParams& grads) {
  const CnnProfile& prof = p.profile;
  Tensor g({1});
  g[0] = grad_q * nn::sigmoid(c.fc_pre[2][0]);
  for (std::size_t l = 3; l-- > 0;) {
    if (l < 2) g = relu_backward(c.fc_pre[l], g);
    Tensor gx;
    nn::linear_backward(c.fc_in[l], p.fc_w[l], g, &gx, grads.fc_w[l], grads.fc_b[l]);
    g = std::move(gx);
  }
  for (std::size_t l = 5; l-- > 0;) {
    const ConvSpec& cs = prof.convs[l];
    Tensor g_act = cs.pool_kernel > 0 ? nn::maxpool2d_backward(g, c.pool_argmax[l], c.conv_act[l].shape())
                                      : Tensor(c.conv_act[l].shape(), std::vector<double>(g.raw().begin(), g.raw().end()));
    if (l == 4 && grad_conv5 && grad_conv5->numel() > 0) g_act += *grad_conv5;
    const Tensor g_pre = relu_backward(c.conv_pre[l], g_act);
    Tensor gx;
    nn::conv2d_backward(c.conv_in[l], p.conv_w[l], cs.stride, cs.pad, g_pre, &gx, grads.conv_w[l],
                        grads.conv_b[l]);
    g = std::move(gx);
  }
  return g;
}

Tensor build_inject_map(const Tensor& conv5_map, const WeightCnnParams& p, std::size_t h, std::size_t w,
                        InjectCache* cache) {
  const std::size_t k = conv5_map.dim(0), sh = conv5_map.dim(1), sw = conv5_map.dim(2);
  if (p.inject_w.dim(1) != k) throw ShapeError("inject projection channel mismatch");
  const std::size_t c = p.out_channels;
  Eigen::Map<const RMatrix> wm(p.inject_w.data(), static_cast<Idx>(c), static_cast<Idx>(k));
  Eigen::Map<const RMatrix> fm(conv5_map.data(), static_cast<Idx>(k), static_cast<Idx>(sh * sw));
  RMatrix pre = wm * fm;
  Tensor gate({c, sh, sw});
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < sh * sw; ++i)
      gate[ci * sh * sw + i] = nn::sigmoid(pre(static_cast<Idx>(ci), static_cast<Idx>(i)) + p.inject_b[ci]);
  Tensor out = image::resize_bilinear(gate, h, w);
  if (cache) {
    cache->conv5 = conv5_map;
    cache->gate = std::move(gate);
  }
  return out;
}

Tensor inject_backward(const WeightCnnParams& p, const InjectCache& cache, const Tensor& grad_map,
                       WeightCnnParams& grads) {
  const std::size_t k = cache.conv5.dim(0), sh = cache.conv5.dim(1), sw = cache.conv5.dim(2);
  const std::size_t c = p.out_channels;
  Tensor g_gate = image::resize_bilinear_adjoint(grad_map, sh, sw);
  RMatrix g_pre(static_cast<Idx>(c), static_cast<Idx>(sh * sw));
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < sh * sw; ++i) {
      const double s = cache.gate[ci * sh * sw + i];
      g_pre(static_cast<Idx>(ci), static_cast<Idx>(i)) = g_gate[ci * sh * sw + i] * sigmoid_d(s);
    }
  Eigen::Map<const RMatrix> fm(cache.conv5.data(), static_cast<Idx>(k), static_cast<Idx>(sh * sw));
  Eigen::Map<RMatrix>(grads.inject_w.data(), static_cast<Idx>(c), static_cast<Idx>(k)).noalias() +=
      g_pre * fm.transpose();
  for (std::size_t ci = 0; ci < c; ++ci) grads.inject_b[ci] += g_pre.row(static_cast<Idx>(ci)).sum();
  Tensor g_conv5({k, sh, sw});
  Eigen::Map<RMatrix>(g_conv5.data(), static_cast<Idx>(k), static_cast<Idx>(sh * sw)).noalias() =
      Eigen::Map<const RMatrix>(p.inject_w.data(), static_cast<Idx>(c), static_cast<Idx>(k)).transpose() * g_pre;
  return g_conv5;
}

LinkWeights normalize_weights(const std::array<double, 3>& q) {
  double sum = 0.0;
  for (double v : q) {
    if (v < 0 || !std::isfinite(v)) throw ValueError("link scores must be finite and >= 0");
    sum += v;
  }
  LinkWeights w;
  const double denom = sum + 3.0 * kWeightEpsilon;
  for (std::size_t i = 0; i < 3; ++i) w.z[i] = (q[i] + kWeightEpsilon) / denom;
  return w;
}

std::array<double, 3> normalize_weights_backward(const std::array<double, 3>& q,
                                                 const std::array<double, 3>& grad_z) {
  const LinkWeights w = normalize_weights(q);
  const double denom = q[0] + q[1] + q[2] + 3.0 * kWeightEpsilon;
  double inner = 0.0;
  for (std::size_t i = 0; i < 3; ++i) inner += grad_z[i] * w.z[i];
  std::array<double, 3> g{};
  for (std::size_t j = 0; j < 3; ++j) g[j] = (grad_z[j] - inner) / denom;
  return g;
}

}  // namespace twrmcae::adaptweight
