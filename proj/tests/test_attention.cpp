#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "twrmcae/attention.hpp"
#include "twrmcae/error.hpp"

using namespace twrmcae;
using namespace twrmcae::attention;

namespace {

CoordAttnParams random_params(std::size_t c, std::size_t r, Rng& rng) {
  CoordAttnParams p = init_params(c, r, rng, 0.0);
  p.visit([&](const char*, Tensor& t) {
    for (double& v : t.raw()) v = rng.uniform(-1.5, 1.5);
  });
  for (double& v : p.bn_gamma.raw()) v = rng.uniform(0.5, 1.5);
  return p;
}

}  // namespace

TEST_CASE("coordinate pooling examples") {
  const Tensor x({1, 2, 2}, {1, 2, 3, 4});
  const Pooled p = coord_pool(x);
  CHECK(p.z_h.shape() == Shape{1, 2, 1});
  CHECK(p.z_w.shape() == Shape{1, 1, 2});
  CHECK(p.z_h == Tensor({1, 2, 1}, {1.5, 3.5}));
  CHECK(p.z_w == Tensor({1, 1, 2}, {2, 3}));

  const Pooled c = coord_pool(Tensor::filled({2, 3, 5}, 0.7));
  for (double v : c.z_h.raw()) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));
  for (double v : c.z_w.raw()) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));

  Rng rng(1);
  const Tensor r = oracle::random_tensor({1, 4, 6}, rng);
  const Pooled q = coord_pool(r);
  CHECK(q.z_h.sum() / 4 == doctest::Approx(r.sum() / 24).epsilon(1e-14));
  CHECK(q.z_w.sum() / 6 == doctest::Approx(r.sum() / 24).epsilon(1e-14));
}

TEST_CASE("zero kernels halve both gates") {
  const CoordAttnParams p = zero_params(3, 3);
  CHECK(p.reduced() == 1);
  Rng rng(2);
  const Tensor x = oracle::random_tensor({3, 5, 4}, rng);
  for (Mode mode : {Mode::train, Mode::eval}) {
    const Tensor y = forward(x, p, mode);
    CHECK(y.shape() == x.shape());
    CHECK(y == x * 0.25);
  }
}

TEST_CASE("gates stay inside (0, 1) and never amplify") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const CoordAttnParams p = random_params(3, 3, rng);
    const Tensor x = oracle::random_tensor({3, 6, 7}, rng, -5, 5);
    Cache cache;
    const Tensor y = forward(x, p, trial % 2 ? Mode::eval : Mode::train, &cache);
    for (Eigen::Index i = 0; i < cache.gate_h.size(); ++i)
      CHECK((cache.gate_h.data()[i] > 0 && cache.gate_h.data()[i] < 1));
    for (Eigen::Index i = 0; i < cache.gate_w.size(); ++i)
      CHECK((cache.gate_w.data()[i] > 0 && cache.gate_w.data()[i] < 1));
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(y[i]) <= std::abs(x[i]));
  }
}

TEST_CASE("column permutation permutes the width gate and leaves the height pooling alone") {
  Rng rng(4);
  const CoordAttnParams p = random_params(3, 3, rng);
  const Tensor x = oracle::random_tensor({3, 4, 5}, rng);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  Tensor xp({3, 4, 5});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t w = 0; w < 5; ++w) xp.at(c, h, w) = x.at(c, h, perm[w]);
  const Pooled a = coord_pool(x), b = coord_pool(xp);
  CHECK((a.z_h - b.z_h).max_abs() < 1e-15);

  Cache ca, cb;
  forward(x, p, Mode::eval, &ca);
  forward(xp, p, Mode::eval, &cb);
  for (Eigen::Index c = 0; c < 3; ++c)
    for (Eigen::Index w = 0; w < 5; ++w)
      CHECK(cb.gate_w(c, w) == doctest::Approx(ca.gate_w(c, static_cast<Eigen::Index>(perm[static_cast<std::size_t>(w)]))).epsilon(1e-14));
}

TEST_CASE("eval mode is deterministic and independent of other inputs") {
  Rng rng(5);
  CoordAttnParams p = random_params(3, 3, rng);
  for (double& v : p.running_var.raw()) v = rng.uniform(0.5, 2);
  for (double& v : p.running_mean.raw()) v = rng.uniform(-1, 1);
  const Tensor x = oracle::random_tensor({3, 6, 6}, rng);
  const Tensor y1 = forward(x, p, Mode::eval);
  forward(oracle::random_tensor({3, 6, 6}, rng), p, Mode::eval);
  forward(oracle::random_tensor({3, 6, 6}, rng), p, Mode::train);
  CHECK(bit_identical(y1, forward(x, p, Mode::eval)));
}

TEST_CASE("running statistics follow the momentum rule") {
  Rng rng(6);
  CoordAttnParams p = random_params(3, 3, rng);
  const Tensor x = oracle::random_tensor({3, 4, 4}, rng);
  Cache cache;
  forward(x, p, Mode::train, &cache);
  const double m0 = p.running_mean[0], v0 = p.running_var[0];
  update_running_stats(p, cache);
  const double n = 8;  // H + W pooled positions
  CHECK(p.running_mean[0] == doctest::Approx(0.9 * m0 + 0.1 * cache.batch_mean(0)).epsilon(1e-14));
  CHECK(p.running_var[0] == doctest::Approx(0.9 * v0 + 0.1 * cache.batch_var(0) * n / (n - 1)).epsilon(1e-14));
}

TEST_CASE("channel mismatch is a shape error") {
  const CoordAttnParams p = zero_params(3, 3);
  CHECK_THROWS_AS(forward(Tensor({2, 4, 4}), p, Mode::train), ShapeError);
  CHECK_THROWS_AS(zero_params(4, 3), ShapeError);
}

TEST_CASE("backward agrees with central differences on a 3x4x4 instance") {
  Rng rng(7);
  for (Mode mode : {Mode::train, Mode::eval}) {
    CoordAttnParams p = random_params(3, 3, rng);
    for (double& v : p.running_var.raw()) v = rng.uniform(0.5, 2);
    Tensor x = oracle::random_tensor({3, 4, 4}, rng);
    const Tensor up = oracle::random_tensor({3, 4, 4}, rng);
    auto loss = [&] { return dot(forward(x, p, mode), up); };

    Cache cache;
    forward(x, p, mode, &cache);
    CoordAttnParams g = zero_params(3, 3);
    g.visit([](const char*, Tensor& t) { t.fill(0); });
    const Tensor gx = backward(x, p, cache, up, g);

    double worst = 0;
    for (std::size_t i = 0; i < x.numel(); ++i)
      worst = std::max(worst, oracle::rel_err(gx[i], oracle::central_diff(x[i], loss)));
    std::vector<Tensor*> params, grads;
    p.visit([&](const char*, Tensor& t) { params.push_back(&t); });
    g.visit([&](const char*, Tensor& t) { grads.push_back(&t); });
    for (std::size_t k = 0; k < params.size(); ++k)
      for (std::size_t i = 0; i < params[k]->numel(); ++i)
        worst = std::max(worst, oracle::rel_err((*grads[k])[i], oracle::central_diff((*params[k])[i], loss)));
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("zero upstream gives zero gradients and leaves the running buffers alone") {
  Rng rng(8);
  const CoordAttnParams p = random_params(3, 3, rng);
  const Tensor x = oracle::random_tensor({3, 4, 4}, rng);
  Cache cache;
  forward(x, p, Mode::train, &cache);
  CoordAttnParams g = zero_params(3, 3);
  g.visit([](const char*, Tensor& t) { t.fill(0); });
  g.running_mean.fill(0.25);
  g.running_var.fill(0.5);
  const Tensor gx = backward(x, p, cache, Tensor({3, 4, 4}), g);
  CHECK(gx.max_abs() == 0);
  g.visit([](const char*, Tensor& t) { CHECK(t.max_abs() == 0); });
  CHECK(g.running_mean == Tensor::filled({1}, 0.25));
  CHECK(g.running_var == Tensor::filled({1}, 0.5));
}

TEST_CASE("initialised block starts near pass-through") {
  Rng rng(9);
  const CoordAttnParams p = init_params(3, 3, rng);
  const Tensor x = oracle::random_tensor({3, 8, 8}, rng);
  const Tensor y = forward(x, p, Mode::train);
  CHECK((y - x).max_abs() < 0.01 * x.max_abs());
  p.visit([](const char*, const Tensor& t) { CHECK(t.all_finite()); });
}
