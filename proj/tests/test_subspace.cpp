#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "twrmcae/error.hpp"
#include "twrmcae/subspace.hpp"

using namespace twrmcae;
using namespace twrmcae::subspace;

namespace {

double frob_inner(const CMatrix& a, const CMatrix& b) { return std::abs((a.adjoint() * b).trace()); }

/// Population statistics computed directly.
double pop_threshold(const std::vector<double>& s, double alpha) {
  double mean = 0;
  for (double v : s) mean += v;
  mean /= static_cast<double>(s.size());
  double var = 0;
  for (double v : s) var += (v - mean) * (v - mean);
  return mean - alpha * std::sqrt(var / static_cast<double>(s.size()));
}

}  // namespace

TEST_CASE("svd of simple matrices") {
  CMatrix d = CMatrix::Zero(2, 2);
  d(0, 0) = 3;
  d(1, 1) = 1;
  const Svd s = svd_full(d);
  CHECK(s.sigma(0) == doctest::Approx(3));
  CHECK(s.sigma(1) == doctest::Approx(1));

  const Svd z = svd_full(CMatrix::Zero(3, 4));
  CHECK(z.sigma.size() == 3);
  CHECK(z.sigma.isZero(0.0));
  CHECK_THROWS_AS(svd_full(CMatrix(0, 0)), ShapeError);
}

TEST_CASE("svd of a random 8x6 matrix against the Hermitian eigen oracle") {
  Rng rng(8);
  const CMatrix m = oracle::random_cmatrix(8, 6, rng);
  const Svd s = svd_full(m);
  REQUIRE(s.sigma.size() == 6);
  const CMatrix rec = s.U * s.sigma.cast<cdouble>().asDiagonal() * s.V.adjoint();
  CHECK((rec - m).norm() / m.norm() < 1e-10);
  CHECK((s.U.adjoint() * s.U - CMatrix::Identity(6, 6)).norm() < 1e-10);
  CHECK((s.V.adjoint() * s.V - CMatrix::Identity(6, 6)).norm() < 1e-10);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(m.adjoint() * m);
  const Eigen::VectorXd ev = eig.eigenvalues();  // ascending
  for (Eigen::Index i = 0; i < 6; ++i) CHECK(std::abs(s.sigma(i) - std::sqrt(ev(5 - i))) < 1e-10);
  for (Eigen::Index i = 1; i < 6; ++i) CHECK(s.sigma(i) <= s.sigma(i - 1));
}

TEST_CASE("wall threshold examples") {
  const std::vector<double> flat{10, 10, 10};
  CHECK(wall_threshold(flat, 2.5) == doctest::Approx(10));

  const std::vector<double> s{100, 1, 0.01};
  const double d1 = wall_threshold(s, 1.0);
  CHECK(d1 == doctest::Approx(pop_threshold(s, 1.0)).epsilon(1e-14));
  CHECK(d1 == doctest::Approx(-13.2).epsilon(0.01));
  const double d06 = wall_threshold(s, 0.6);
  CHECK(d06 == doctest::Approx(pop_threshold(s, 0.6)).epsilon(1e-14));
  CHECK(d06 == doctest::Approx(5.5).epsilon(0.01));
  CHECK_THROWS_AS(wall_threshold(std::vector<double>{1}, 1.0), ValueError);
}

TEST_CASE("wall classification of the threshold examples") {
  CMatrix d = CMatrix::Zero(3, 3);
  d(0, 0) = 100;
  d(1, 1) = 1;
  d(2, 2) = 0.01;
  SeparationReport rep;
  SeparationParams p;
  p.alpha = 1.0;
  svd_separate(d, p, &rep);
  CHECK(rep.wall_indices == std::vector<std::size_t>{0, 1, 2});
  p.alpha = 0.6;
  svd_separate(d, p, &rep);
  CHECK(rep.wall_indices == std::vector<std::size_t>{0});

  CMatrix flat = CMatrix::Identity(3, 3) * 10.0;
  svd_separate(flat, p, &rep);
  CHECK(rep.wall_indices.size() == 3);
}

TEST_CASE("aic split examples") {
  CHECK(aic_noise_index(std::vector<double>{10, 10}, 256) == 1);

  const std::vector<double> s{50, 49, 1e-6, 1.1e-6, 0.9e-6};
  // The library takes the spectrum as given; sort only for the oracle.
  std::vector<double> sorted = s;
  std::sort(sorted.rbegin(), sorted.rend());
  CHECK(oracle::brute_aic_index(sorted, 256) == 2);
  CHECK(aic_noise_index(sorted, 256) == 2);
  for (std::size_t i = 1; i < sorted.size(); ++i)
    CHECK(aic_value(sorted, i, 256) == doctest::Approx(oracle::aic(sorted, i, 256)).epsilon(1e-12));

  CHECK_THROWS_AS(aic_noise_index(std::vector<double>{1}, 256), ValueError);
  CHECK_THROWS_AS(aic_noise_index(std::vector<double>{2, 1}, 1), ValueError);
}

TEST_CASE("appending a noise-scale value never lowers the signal count") {
  const std::vector<double> base{50, 49, 1e-6, 1.1e-6, 0.9e-6};
  for (int k = 0; k <= 40; ++k) {
    std::vector<double> s = base;
    s.push_back(0.8e-6 + 0.01e-6 * k);
    std::sort(s.rbegin(), s.rend());
    const std::size_t i = aic_noise_index(s, 256);
    CHECK(i == oracle::brute_aic_index(s, 256));
    CHECK(i >= 2);
  }
}

TEST_CASE("aic index agrees with the brute-force oracle on random spectra") {
  Rng rng(44);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s;
    const auto sig = rng.uniform_int(1, 4);
    const auto noise = rng.uniform_int(2, 8);
    for (int i = 0; i < sig; ++i) s.push_back(rng.uniform(10, 100));
    for (int i = 0; i < noise; ++i) s.push_back(rng.uniform(0.8e-6, 1.2e-6));
    std::sort(s.rbegin(), s.rend());
    const double n_obs = rng.uniform(4, 512);
    CHECK(aic_noise_index(s, n_obs) == oracle::brute_aic_index(s, n_obs));
  }
}

TEST_CASE("zero matrix separates into three zero matrices") {
  SeparationReport rep;
  const auto t = svd_separate(CMatrix::Zero(5, 4), {}, &rep);
  CHECK(t.target.isZero(0.0));
  CHECK(t.wall.isZero(0.0));
  CHECK(t.noise.isZero(0.0));
  CHECK(rep.noise_indices.size() == 4);
}

TEST_CASE("three-scale construction lands in the right subspaces") {
  Rng rng(19);
  for (int trial = 0; trial < 5; ++trial) {
    const CMatrix U = oracle::random_orthonormal(12, 3, rng), V = oracle::random_orthonormal(10, 3, rng);
    const CMatrix w = 100.0 * U.col(0) * V.col(0).adjoint();
    const CMatrix t = 1.0 * U.col(1) * V.col(1).adjoint();
    const CMatrix n = 1e-6 * U.col(2) * V.col(2).adjoint();
    SeparationParams p;
    p.alpha = 0.6;
    SeparationReport rep;
    const auto out = svd_separate(w + t + n, p, &rep);
    CHECK(rep.rank == 3);
    CHECK((out.wall - w).norm() < 1e-10);
    CHECK((out.target - t).norm() < 1e-10);
    CHECK((out.noise - n).norm() < 1e-10);
  }
}

TEST_CASE("null-space components are excluded from both statistics") {
  // A rank-3 block inside a 40x40 matrix: without the rank rule the 37 zero
  // singular values would pull the threshold below zero.
  Rng rng(5);
  const CMatrix U = oracle::random_orthonormal(40, 3, rng), V = oracle::random_orthonormal(40, 3, rng);
  const CMatrix m = 100.0 * U.col(0) * V.col(0).adjoint() + 1.0 * U.col(1) * V.col(1).adjoint() +
                    1e-6 * U.col(2) * V.col(2).adjoint();
  SeparationParams p;
  p.alpha = 0.6;
  SeparationReport rep;
  svd_separate(m, p, &rep);
  CHECK(rep.rank == 3);
  CHECK(rep.sigma_d == doctest::Approx(pop_threshold({100, 1, 1e-6}, 0.6)).epsilon(1e-9));
  CHECK(rep.wall_indices == std::vector<std::size_t>{0});
  CHECK(rep.target_indices == std::vector<std::size_t>{1});
  CHECK(rep.noise_indices.size() == 38);
}

TEST_CASE("separation properties on random matrices") {
  Rng rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    const CMatrix m = oracle::random_cmatrix(16, 16, rng) * rng.uniform(0.1, 10);
    SeparationParams p;
    p.alpha = rng.uniform(0.2, 2.0);
    SeparationReport rep;
    const auto t = svd_separate(m, p, &rep);
    CHECK((t.target + t.wall + t.noise - m).norm() / m.norm() < 1e-10);

    std::vector<std::size_t> all = rep.wall_indices;
    all.insert(all.end(), rep.target_indices.begin(), rep.target_indices.end());
    all.insert(all.end(), rep.noise_indices.begin(), rep.noise_indices.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expect(16);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(all == expect);

    const double scale = m.squaredNorm();
    CHECK(frob_inner(t.target, t.wall) < 1e-8 * scale);
    CHECK(frob_inner(t.target, t.noise) < 1e-8 * scale);
    CHECK(frob_inner(t.wall, t.noise) < 1e-8 * scale);

    const double c = rng.uniform(0.5, 20);
    SeparationReport rc;
    const auto ts = svd_separate(c * m, p, &rc);
    CHECK(rc.wall_indices == rep.wall_indices);
    CHECK(rc.target_indices == rep.target_indices);
    CHECK(rc.noise_indices == rep.noise_indices);
    CHECK((ts.wall - c * t.wall).norm() < 1e-9 * c * m.norm());
    CHECK((ts.target - c * t.target).norm() < 1e-9 * c * m.norm());
  }
}

TEST_CASE("max rank cap and argument checks") {
  Rng rng(3);
  const CMatrix m = oracle::random_cmatrix(10, 10, rng);
  SeparationParams p;
  p.alpha = 0.1;
  SeparationReport full, capped;
  svd_separate(m, p, &full);
  p.max_rank = full.wall_indices.size();
  svd_separate(m, p, &capped);
  CHECK(capped.target_indices.empty());
  p.alpha = 0;
  CHECK_THROWS_AS(svd_separate(m, p), ValueError);
}

TEST_CASE("report json carries the spectrum and index sets") {
  CMatrix d = CMatrix::Zero(3, 3);
  d(0, 0) = 100;
  d(1, 1) = 1;
  d(2, 2) = 0.01;
  SeparationParams p;
  p.alpha = 0.6;
  SeparationReport rep;
  svd_separate(d, p, &rep);
  const auto j = rep.to_json();
  CHECK(j.at("sigma").size() == 3);
  CHECK(j.at("wall") == nlohmann::json::array({0}));
  CHECK(j.contains("sigma_d"));
  CHECK(j.contains("aic_index"));
  CHECK(j.at("rank") == 3);
}
