#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "twrmcae/error.hpp"
#include "twrmcae/preprocess.hpp"
#include "twrmcae/sim.hpp"

using namespace twrmcae;

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;

RadarConfig small_config() {
  RadarConfig cfg;
  cfg.K = 40;
  cfg.N = 128;
  cfg.M = 64;
  return cfg;
}

void check_unit_range(const Tensor& img) {
  for (double v : img.raw()) CHECK((v >= 0.0 && v <= 1.0));
}

}  // namespace

TEST_CASE("range profile of zeros is zero") {
  const RadarConfig cfg = small_config();
  const auto p = pre::range_profile(CMatrix::Zero(3, static_cast<Eigen::Index>(cfg.K)), cfg);
  CHECK(p.data.rows() == 3);
  CHECK(p.data.cols() == static_cast<Eigen::Index>(cfg.N));
  CHECK(p.data.isZero(0.0));
  CHECK(p.range_bin_m == doctest::Approx(cfg.range_bin_m()));
}

TEST_CASE("range profile matches the direct inverse DFT and Parseval") {
  const RadarConfig cfg = small_config();
  Rng rng(6);
  const CMatrix echo = oracle::random_cmatrix(2, static_cast<Eigen::Index>(cfg.K), rng);
  const CMatrix prof = pre::range_profile(echo, cfg).data;
  for (Eigen::Index r = 0; r < echo.rows(); ++r) {
    std::vector<cdouble> row(echo.row(r).data(), echo.row(r).data() + echo.cols());
    const auto ref = oracle::naive_idft(row, cfg.N);
    for (std::size_t k = 0; k < cfg.N; ++k) CHECK(std::abs(prof(r, static_cast<Eigen::Index>(k)) - ref[k]) < 1e-12);
    const double lhs = echo.row(r).squaredNorm();
    const double rhs = static_cast<double>(cfg.N) * prof.row(r).squaredNorm();
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("phase ramp peaks at round(tau N df)") {
  RadarConfig cfg;
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const double tau = rng.uniform(10e-9, 60e-9);
    CMatrix row(1, static_cast<Eigen::Index>(cfg.K));
    for (std::size_t k = 0; k < cfg.K; ++k)
      row(0, static_cast<Eigen::Index>(k)) = std::polar(1.0, -kTwoPi * static_cast<double>(k) * cfg.delta_f * tau);
    const CMatrix prof = pre::range_profile(row, cfg).data;
    Eigen::Index peak = 0;
    prof.row(0).cwiseAbs().maxCoeff(&peak);
    const auto expected = static_cast<Eigen::Index>(std::lround(tau * static_cast<double>(cfg.N) * cfg.delta_f));
    CHECK(std::abs(peak - expected) <= 1);
  }
}

TEST_CASE("mti: differencing rule, static rejection and linearity") {
  CMatrix r(1, 3);
  r << cdouble(1, 2), cdouble(-1, 0), cdouble(0, 3);
  CMatrix x(3, 3);
  x.row(0) = r;
  x.row(1) = 2.0 * r;
  x.row(2) = 4.0 * r;
  const CMatrix y = pre::mti(x);
  REQUIRE(y.rows() == 2);
  CHECK(y.row(0) == r);
  CHECK(y.row(1) == (2.0 * r).eval());

  CHECK(pre::mti(r.replicate(5, 1)).isZero(0.0));

  Rng rng(2);
  const CMatrix a = oracle::random_cmatrix(6, 4, rng), b = oracle::random_cmatrix(6, 4, rng);
  const cdouble ca(0.3, -1.1), cb(2.0, 0.5);
  CHECK((pre::mti(ca * a + cb * b) - (ca * pre::mti(a) + cb * pre::mti(b))).cwiseAbs().maxCoeff() < 1e-12);

  RadarConfig cfg;
  const CMatrix wall = sim::wall_echo(cfg, 10.0);
  CHECK(pre::mti(wall).cwiseAbs().maxCoeff() < 1e-12 * wall.cwiseAbs().maxCoeff());
  CHECK_THROWS_AS(pre::mti(CMatrix::Zero(1, 4)), ValueError);
}

TEST_CASE("gate bins cover the configured range interval") {
  RadarConfig cfg;
  const auto g = pre::gate_bins(cfg, cfg.N);
  const double dr = cfg.range_bin_m();
  CHECK(static_cast<double>(g.first) * dr >= cfg.range_gate_min);
  CHECK(static_cast<double>(g.first - 1) * dr < cfg.range_gate_min);
  CHECK(static_cast<double>(g.last - 1) * dr <= cfg.range_gate_max);
  CHECK(static_cast<double>(g.last) * dr > cfg.range_gate_max);
}

TEST_CASE("colormap endpoints and continuity") {
  CHECK(pre::colormap(0.0) == std::array<double, 3>{0, 0, 0.5});
  CHECK(pre::colormap(0.5) == std::array<double, 3>{0, 1, 0.5});
  CHECK(pre::colormap(1.0) == std::array<double, 3>{1, 0, 0});
  const auto mid = pre::colormap(0.125);
  CHECK(mid[2] == doctest::Approx(0.75));
}

TEST_CASE("render: zero map is uniform colormap(0), single bright pixel stays in place") {
  pre::RenderOptions opts;
  opts.height = 16;
  opts.width = 16;
  const Tensor z = pre::render_magnitude(RMatrix::Zero(16, 16), opts);
  const auto c0 = pre::colormap(0.0);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t j = 0; j < 16; ++j) CHECK(z.at(c, i, j) == c0[c]);

  RMatrix m = RMatrix::Zero(16, 16);
  m(5, 11) = 3.0;
  const Tensor img = pre::render_magnitude(m, opts);
  // Red channel is monotone in the normalised value over the upper half of the map.
  std::size_t bi = 0, bj = 0;
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j)
      if (img.at(0, i, j) > img.at(0, bi, bj)) bi = i, bj = j;
  CHECK(bi == 5);
  CHECK(bj == 11);

  Rng rng(3);
  RMatrix r(20, 30);
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = std::abs(rng.normal()) * 1e3;
  check_unit_range(pre::render_magnitude(r));
}

TEST_CASE("render with a reference peak uses that peak") {
  RMatrix m = RMatrix::Constant(4, 4, 1.0);
  pre::RenderOptions opts;
  opts.height = 4;
  opts.width = 4;
  // 0 dB pixel against a +20 dB reference sits halfway down a 40 dB range.
  const Tensor img = pre::render_magnitude(m, opts, 20.0);
  const auto rgb = pre::colormap(0.5);
  CHECK(img.at(1, 0, 0) == doctest::Approx(rgb[1]).epsilon(1e-9));
}

TEST_CASE("hilbert: closed-form quadrature of a cosine") {
  const std::size_t L = 64;
  std::vector<double> x(L);
  for (std::size_t n = 0; n < L; ++n) x[n] = std::cos(kTwoPi * static_cast<double>(n) / 16.0);
  const auto a = pre::hilbert(x);
  double err = 0, re_err = 0;
  for (std::size_t n = 0; n < L; ++n) {
    err = std::max(err, std::abs(a[n].imag() - std::sin(kTwoPi * static_cast<double>(n) / 16.0)));
    re_err = std::max(re_err, std::abs(a[n].real() - x[n]));
  }
  CHECK(err < 1e-10);
  CHECK(re_err < 1e-12);

  const auto zero = pre::hilbert(std::vector<double>(L, 0.0));
  for (auto v : zero) CHECK(v == cdouble(0, 0));
  CHECK_THROWS_AS(pre::hilbert(std::vector<double>(2, 1.0)), ValueError);
}

TEST_CASE("hilbert output has no negative-frequency content") {
  Rng rng(17);
  for (std::size_t L : {32, 33, 100}) {
    std::vector<double> x(L);
    for (double& v : x) v = rng.normal();
    const auto spec = oracle::naive_dft(pre::hilbert(x));
    double peak = 0, neg = 0;
    for (std::size_t k = 0; k < L; ++k) {
      peak = std::max(peak, std::abs(spec[k]));
      if (k > L / 2 || (L % 2 == 1 && k == L / 2 + 1)) neg = std::max(neg, std::abs(spec[k]));
    }
    CHECK(neg / peak < 1e-10);
  }
}

TEST_CASE("dtm: pure tone lands on the nearest Doppler row, conjugation mirrors it") {
  RadarConfig cfg;
  const auto g = pre::gate_bins(cfg, cfg.N);
  const std::size_t bin = (g.first + g.last) / 2;
  const double prf = cfg.sweep_rate_hz();
  pre::RenderOptions opts;
  for (double fd : {-20.0, -7.5, 3.4, 12.0, 24.6}) {
    CMatrix phi = CMatrix::Zero(static_cast<Eigen::Index>(cfg.M), static_cast<Eigen::Index>(cfg.N));
    for (std::size_t m = 0; m < cfg.M; ++m)
      phi(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(bin)) =
          std::polar(1.0, kTwoPi * fd * static_cast<double>(m) / prf);
    const RMatrix d = pre::dtm_magnitude(phi, cfg, opts);
    CHECK(d.rows() == static_cast<Eigen::Index>(opts.stft_window));
    Eigen::Index row = 0, col = 0;
    d.maxCoeff(&row, &col);
    std::size_t nearest = 0;
    for (std::size_t r = 0; r < opts.stft_window; ++r)
      if (std::abs(pre::dtm_row_frequency(r, cfg, opts) - fd) < std::abs(pre::dtm_row_frequency(nearest, cfg, opts) - fd))
        nearest = r;
    CHECK(static_cast<std::size_t>(row) == nearest);

    const RMatrix dm = pre::dtm_magnitude(phi.conjugate(), cfg, opts);
    const auto W = static_cast<Eigen::Index>(opts.stft_window);
    for (Eigen::Index r = 0; r < W; ++r)
      CHECK((dm.row(r) - d.row((W - r) % W)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("rtm and dtm images are in range, sized and deterministic") {
  RadarConfig cfg;
  Rng rng(1);
  const sim::Scene s = sim::make_scene(sim::MotionState::walk_parallel, cfg, rng);
  Rng n(2);
  const CMatrix phi = pre::mti(pre::range_profile(sim::synthesize_echo(s, cfg, n), cfg).data);
  const Tensor rtm = pre::build_rtm(phi, cfg), dtm = pre::build_dtm(phi, cfg);
  CHECK(rtm.shape() == Shape{3, 64, 64});
  CHECK(dtm.shape() == Shape{3, 64, 64});
  check_unit_range(rtm);
  check_unit_range(dtm);
  CHECK(bit_identical(rtm, pre::build_rtm(phi, cfg)));
  CHECK(bit_identical(dtm, pre::build_dtm(phi, cfg)));

  const CMatrix zero = CMatrix::Zero(phi.rows(), phi.cols());
  const Tensor zr = pre::build_rtm(zero, cfg);
  for (std::size_t c = 0; c < 3; ++c) CHECK(zr.at(c, 10, 10) == pre::colormap(0)[c]);
}
