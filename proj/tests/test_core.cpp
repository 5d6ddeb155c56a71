#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "twrmcae/config.hpp"
#include "twrmcae/error.hpp"
#include "twrmcae/fft.hpp"
#include "twrmcae/image.hpp"
#include "twrmcae/io.hpp"
#include "twrmcae/nn.hpp"
#include "twrmcae/parallel.hpp"
#include "twrmcae/rng.hpp"
#include "twrmcae/tensor.hpp"

using namespace twrmcae;
namespace fs = std::filesystem;

namespace {

Tensor roundtrip(const Tensor& t) {
  std::stringstream ss;
  io::write_twrt(t, ss);
  return io::read_twrt(ss);
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "twrmcae_test_core";
  fs::create_directories(d);
  return d / name;
}

}  // namespace

TEST_CASE("twrt layout of a 2x2 real tensor") {
  const Tensor t({2, 2}, {1, 2, 3, 4});
  std::stringstream ss;
  io::write_twrt(t, ss);
  const std::string bytes = ss.str();
  CHECK(bytes.size() == 8 + 2 * 4 + 32);
  CHECK(bytes.substr(0, 4) == "TWRT");
  CHECK(static_cast<int>(bytes[4]) == 1);
  CHECK(static_cast<int>(bytes[5]) == 0);
  CHECK(static_cast<int>(bytes[6]) == 2);
  CHECK(bit_identical(roundtrip(t), t));
}

TEST_CASE("twrt empty and complex tensors round-trip") {
  const Tensor empty({0});
  const Tensor back = roundtrip(empty);
  CHECK(back.shape() == Shape{0});
  CHECK(back.numel() == 0);

  Tensor c({1, 1}, TensorKind::complex);
  c.set_complex(0, {3, 4});
  const Tensor cb = roundtrip(c);
  CHECK(cb.is_complex());
  CHECK(cb.complex_at(0) == cdouble(3, 4));
}

TEST_CASE("twrt round-trip is bit-exact for random shapes and kinds") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Shape shape;
    const auto rank = static_cast<std::size_t>(rng.uniform_int(1, 4));
    for (std::size_t i = 0; i < rank; ++i) shape.push_back(static_cast<std::size_t>(rng.uniform_int(1, 5)));
    const auto kind = trial % 2 ? TensorKind::complex : TensorKind::real;
    Tensor t(shape, kind);
    for (double& v : t.raw()) v = rng.normal() * 1e3;
    t.raw()[0] = -0.0;
    CHECK(bit_identical(roundtrip(t), t));
  }
}

TEST_CASE("twrt rejects malformed input") {
  std::stringstream bad("TWRX\x01\x00\x01\x00");
  CHECK_THROWS_AS(io::read_twrt(bad), IoError);
  std::stringstream truncated;
  io::write_twrt(Tensor({4}, {1, 2, 3, 4}), truncated);
  std::string s = truncated.str();
  s.resize(s.size() - 3);
  std::stringstream cut(s);
  CHECK_THROWS_AS(io::read_twrt(cut), IoError);
  CHECK_THROWS_AS(io::read_twrt(scratch("does_not_exist.twrt")), IoError);
}

TEST_CASE("png quantisation") {
  CHECK(io::quantize_pixel(0.0) == 0);
  CHECK(io::quantize_pixel(1.0) == 255);
  CHECK(io::quantize_pixel(0.5) == 128);
  CHECK(io::quantize_pixel(-3.0) == 0);
  CHECK(io::quantize_pixel(7.0) == 255);

  for (double v : {0.0, 1.0}) {
    const fs::path p = scratch(v == 0 ? "black.png" : "white.png");
    io::write_png(Tensor::filled({3, 4, 5}, v), p);
    std::size_t h = 0, w = 0;
    const auto px = io::read_png_rgb(p, h, w);
    CHECK(h == 4);
    CHECK(w == 5);
    CHECK(std::all_of(px.begin(), px.end(), [&](std::uint8_t b) { return b == (v == 0 ? 0 : 255); }));
  }
}

TEST_CASE("row-major indexing") {
  RMatrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  const Tensor t = to_tensor(m);
  CHECK(t.shape() == Shape{2, 3});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(t[i * 3 + j] == m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
  Rng rng(3);
  const CMatrix c = oracle::random_cmatrix(3, 4, rng);
  CHECK(to_cmatrix(to_tensor(c)) == c);
}

TEST_CASE("tensor arithmetic and shape checks") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor b({2, 2}, {4, 3, 2, 1});
  CHECK((a + b) == Tensor::filled({2, 2}, 5));
  CHECK(dot(a, b) == doctest::Approx(20));
  CHECK(hadamard(a, b) == Tensor({2, 2}, {4, 6, 6, 4}));
  a.axpy(2, b);
  CHECK(a == Tensor({2, 2}, {9, 8, 7, 6}));
  CHECK_THROWS_AS(a += Tensor({4}), ShapeError);
  Tensor n({1});
  n[0] = std::nan("");
  CHECK_FALSE(n.all_finite());
  CHECK_THROWS_AS(n.require_finite("n"), NumericError);
}

TEST_CASE("rng streams are reproducible and independent") {
  Rng a(42, 7), b(42, 7), c(42, 8);
  std::vector<double> va, vb, vc;
  for (int i = 0; i < 100; ++i) {
    va.push_back(a.uniform());
    vb.push_back(b.uniform());
    vc.push_back(c.uniform());
  }
  CHECK(va == vb);
  CHECK(va != vc);
  CHECK(std::all_of(va.begin(), va.end(), [](double v) { return v >= 0 && v < 1; }));

  // Substreams do not depend on how far the parent has advanced.
  Rng p(5);
  const Rng s0 = p.substream(3);
  p.uniform();
  Rng s1 = p.substream(3), s0c = s0;
  CHECK(s0c.next_u64() == s1.next_u64());

  Rng g(9);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = g.normal();
    sum += v;
    sq += v * v;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sq / n - 1) < 0.05);

  for (int i = 0; i < 1000; ++i) {
    const auto v = g.uniform_int(-2, 3);
    CHECK((v >= -2 && v <= 3));
  }
}

TEST_CASE("radar config validation and json round-trip") {
  RadarConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.range_bin_m() == doctest::Approx(kSpeedOfLight / (2 * 1024 * 10e6)));
  nlohmann::json j = cfg;
  const RadarConfig back = j.get<RadarConfig>();
  CHECK(nlohmann::json(back) == j);
  RadarConfig bad = cfg;
  bad.N = 100;  // smaller than K
  CHECK_THROWS_AS(bad.validate(), ValueError);
  bad = cfg;
  bad.delta_f = -1;
  CHECK_THROWS_AS(bad.validate(), ValueError);
}

TEST_CASE("fft matches the direct DFT and inverts") {
  Rng rng(1);
  for (std::size_t n : {1, 7, 16, 30}) {
    std::vector<cdouble> x(n);
    for (auto& v : x) v = {rng.normal(), rng.normal()};
    const auto ref = oracle::naive_dft(x);
    std::vector<cdouble> y = x;
    fft::forward(y);
    for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(y[k] - ref[k]) < 1e-10);
    fft::inverse(y);
    for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(y[k] - x[k]) < 1e-12);
  }
}

TEST_CASE("parallel_for covers every index once at any worker count") {
  for (std::size_t workers : {1, 3, 8}) {
    set_worker_count(workers);
    CHECK(worker_count() == workers);
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  }
  set_worker_count(0);
  CHECK(worker_count() >= 1);
  CHECK_THROWS(parallel_for(10, [](std::size_t i) {
    if (i == 5) throw ValueError("boom");
  }));
}

TEST_CASE("bilinear resize preserves constants and its adjoint is exact") {
  const RMatrix m = image::bilinear_matrix(5, 9);
  for (Eigen::Index r = 0; r < m.rows(); ++r) CHECK(m.row(r).sum() == doctest::Approx(1.0).epsilon(1e-14));

  const Tensor c = Tensor::filled({2, 7, 3}, 0.37);
  const Tensor rc = image::resize_bilinear(c, 11, 4);
  for (double v : rc.raw()) CHECK(v == doctest::Approx(0.37).epsilon(1e-14));

  // <R x, y> = <x, R^T y>
  Rng rng(4);
  const Tensor x = oracle::random_tensor({2, 7, 3}, rng);
  const Tensor y = oracle::random_tensor({2, 11, 4}, rng);
  const double lhs = dot(image::resize_bilinear(x, 11, 4), y);
  const double rhs = dot(x, image::resize_bilinear_adjoint(y, 7, 3));
  CHECK(std::abs(lhs - rhs) < 1e-12);

  // Same size is the identity.
  CHECK(image::resize_bilinear(x, 7, 3) == x);
}

TEST_CASE("conv2d matches the direct convolution and im2col is adjoint to col2im") {
  Rng rng(8);
  const Tensor x = oracle::random_tensor({3, 9, 7}, rng);
  for (auto [k, stride, pad] : {std::tuple<std::size_t, std::size_t, std::size_t>{3, 1, 1}, {5, 2, 2}, {4, 3, 0}}) {
    const Tensor w = oracle::random_tensor({4, 3, k, k}, rng);
    const Tensor b = oracle::random_tensor({4}, rng);
    const Tensor y = nn::conv2d(x, w, b, stride, pad);
    const Tensor ref = oracle::naive_conv(x, w, b, stride, pad);
    REQUIRE(y.shape() == ref.shape());
    CHECK((y - ref).max_abs() < 1e-12);

    const RMatrix cols = nn::im2col(x, k, k, stride, pad);
    const RMatrix r = RMatrix::Random(cols.rows(), cols.cols());
    const double lhs = (cols.array() * r.array()).sum();
    const double rhs = dot(x, nn::col2im(r, 3, 9, 7, k, k, stride, pad));
    CHECK(std::abs(lhs - rhs) < 1e-10);
  }
}

TEST_CASE("identity kernels pass tensors through conv and deconv") {
  Rng rng(2);
  const Tensor x = oracle::random_tensor({3, 6, 5}, rng);
  const Tensor k = nn::identity_kernel3(3);
  const Tensor zb({3});
  CHECK(nn::conv2d(x, k, zb, 1, 1) == x);
  CHECK(nn::deconv2d(x, k, zb, 1) == x);
}

TEST_CASE("nn backward passes agree with central differences") {
  Rng rng(21);
  const Tensor x0 = oracle::random_tensor({2, 6, 6}, rng);
  const Tensor w0 = oracle::random_tensor({3, 2, 3, 3}, rng);
  const Tensor b0 = oracle::random_tensor({3}, rng);
  const Tensor up = oracle::random_tensor({3, 3, 3}, rng);

  SUBCASE("conv2d") {
    Tensor x = x0, w = w0, b = b0;
    auto f = [&] { return dot(nn::conv2d(x, w, b, 2, 1), up); };
    Tensor gx, gw({3, 2, 3, 3}), gb({3});
    nn::conv2d_backward(x, w, 2, 1, up, &gx, gw, gb);
    for (std::size_t i = 0; i < x.numel(); i += 7) CHECK(oracle::rel_err(gx[i], oracle::central_diff(x[i], f)) < 1e-7);
    for (std::size_t i = 0; i < w.numel(); i += 5) CHECK(oracle::rel_err(gw[i], oracle::central_diff(w[i], f)) < 1e-7);
    for (std::size_t i = 0; i < 3; ++i) CHECK(oracle::rel_err(gb[i], oracle::central_diff(b[i], f)) < 1e-7);
  }
  SUBCASE("deconv2d") {
    Tensor x = oracle::random_tensor({2, 5, 5}, rng), w = oracle::random_tensor({2, 3, 3, 3}, rng), b = b0;
    const Tensor u = oracle::random_tensor({3, 5, 5}, rng);
    auto f = [&] { return dot(nn::deconv2d(x, w, b, 1), u); };
    Tensor gx, gw({2, 3, 3, 3}), gb({3});
    nn::deconv2d_backward(x, w, 1, u, &gx, gw, gb);
    for (std::size_t i = 0; i < x.numel(); i += 3) CHECK(oracle::rel_err(gx[i], oracle::central_diff(x[i], f)) < 1e-7);
    for (std::size_t i = 0; i < w.numel(); i += 4) CHECK(oracle::rel_err(gw[i], oracle::central_diff(w[i], f)) < 1e-7);
    for (std::size_t i = 0; i < 3; ++i) CHECK(oracle::rel_err(gb[i], oracle::central_diff(b[i], f)) < 1e-7);
  }
  SUBCASE("linear") {
    Tensor x = oracle::random_tensor({5}, rng), w = oracle::random_tensor({4, 5}, rng), b = oracle::random_tensor({4}, rng);
    const Tensor u = oracle::random_tensor({4}, rng);
    auto f = [&] { return dot(nn::linear(x, w, b), u); };
    Tensor gx, gw({4, 5}), gb({4});
    nn::linear_backward(x, w, u, &gx, gw, gb);
    for (std::size_t i = 0; i < 5; ++i) CHECK(oracle::rel_err(gx[i], oracle::central_diff(x[i], f)) < 1e-8);
    for (std::size_t i = 0; i < 20; ++i) CHECK(oracle::rel_err(gw[i], oracle::central_diff(w[i], f)) < 1e-8);
  }
}

TEST_CASE("maxpool routes gradient to the first maximum only") {
  const Tensor x({1, 2, 4}, {1, 5, 5, 2, 0, 3, 7, 7});
  std::vector<std::size_t> arg;
  const Tensor y = nn::maxpool2d(x, 2, 2, &arg);
  CHECK(y == Tensor({1, 1, 2}, {5, 7}));
  CHECK(arg == std::vector<std::size_t>{1, 6});
  const Tensor g = nn::maxpool2d_backward(Tensor({1, 1, 2}, {10, 20}), arg, x.shape());
  CHECK(g == Tensor({1, 2, 4}, {0, 10, 0, 0, 0, 0, 20, 0}));
}

TEST_CASE("scalar helpers") {
  CHECK(nn::sigmoid(0) == 0.5);
  CHECK(nn::softplus(0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(nn::softplus(800) == doctest::Approx(800));
  CHECK(nn::softplus(-800) >= 0);
  CHECK(nn::conv_out_extent(227, 11, 4, 0) == 55);
}
