#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "twrmcae/error.hpp"
#include "twrmcae/pipeline.hpp"
#include "twrmcae/preprocess.hpp"
#include "twrmcae/sim.hpp"
#include "twrmcae/subspace.hpp"

using namespace twrmcae;

namespace {

/// Range (behind the wall) whose two-way delay is tau.
double range_for_delay(double tau, const RadarConfig& cfg) {
  return tau * kSpeedOfLight / 2.0 - cfg.wall_excess_m();
}

sim::Scatterer static_scatterer(double amplitude, double range, const RadarConfig& cfg) {
  return {amplitude, std::vector<double>(cfg.M, range)};
}

}  // namespace

TEST_CASE("state names round-trip and labels are distinct") {
  std::set<int> labels;
  for (auto s : sim::kAllStates) {
    CHECK(sim::parse_state(sim::state_name(s)) == s);
    labels.insert(sim::state_label(s));
  }
  CHECK(labels.size() == 7);
  CHECK_THROWS_AS(sim::parse_state("running"), ValueError);
}

TEST_CASE("empty state has no scatterers") {
  RadarConfig cfg;
  Rng rng(1);
  CHECK(sim::generate_trajectory(sim::MotionState::empty, cfg, rng).empty());
}

TEST_CASE("perpendicular walk covers the configured travel monotonically") {
  RadarConfig cfg;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Rng rng(seed);
    const auto sc = sim::generate_trajectory(sim::MotionState::walk_perpendicular, cfg, rng);
    const auto& torso = sc.front().range_m;
    REQUIRE(torso.size() == cfg.M);
    const double span = std::abs(torso.back() - torso.front());
    // 0.75 m/s over the frame, sampled at t = m T / M for m < M.
    const double expected = 0.75 * cfg.frame_duration * static_cast<double>(cfg.M - 1) / static_cast<double>(cfg.M);
    CHECK(span == doctest::Approx(expected).epsilon(1e-12));
    const bool up = torso.back() > torso.front();
    for (std::size_t m = 1; m < torso.size(); ++m) CHECK((up ? torso[m] > torso[m - 1] : torso[m] < torso[m - 1]));
  }
}

TEST_CASE("trajectories are reproducible and stay inside the range bounds") {
  RadarConfig cfg;
  for (auto s : sim::kAllStates) {
    Rng a(77), b(77);
    const auto ta = sim::generate_trajectory(s, cfg, a);
    const auto tb = sim::generate_trajectory(s, cfg, b);
    REQUIRE(ta.size() == tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) {
      CHECK(ta[i].amplitude == tb[i].amplitude);
      CHECK(ta[i].range_m == tb[i].range_m);
      for (double r : ta[i].range_m) CHECK((r >= 1.5 && r <= 6.0));
    }
    if (s != sim::MotionState::empty) CHECK(ta.front().amplitude == 1.0);
  }
}

TEST_CASE("echo of nothing is zero") {
  RadarConfig cfg;
  sim::Scene scene;
  Rng rng(0);
  const CMatrix e = sim::synthesize_echo(scene, cfg, rng);
  CHECK(e.rows() == static_cast<Eigen::Index>(cfg.M));
  CHECK(e.cols() == static_cast<Eigen::Index>(cfg.K));
  CHECK(e.isZero(0.0));
  CHECK(sim::clean_target(scene, cfg).isZero(0.0));
}

TEST_CASE("integer-cycle delay gives a unit first column") {
  RadarConfig cfg;
  const double tau = 20e-9;
  const auto sc = static_scatterer(1.0, range_for_delay(tau, cfg), cfg);
  CHECK(sim::scatterer_delay(sc.range_m[0], cfg) == doctest::Approx(tau).epsilon(1e-14));
  const CMatrix e = sim::scatterer_echo({sc}, cfg);
  for (Eigen::Index m = 0; m < e.rows(); m += 17) {
    CHECK(std::abs(e(m, 0) - cdouble(1, 0)) < 1e-9);
  }
}

TEST_CASE("static scatterer peaks at the delay bin of the range profile") {
  RadarConfig cfg;
  const double tau = 20e-9;
  const CMatrix e = sim::scatterer_echo({static_scatterer(1.0, range_for_delay(tau, cfg), cfg)}, cfg);
  const CMatrix prof = pre::range_profile(e, cfg).data;
  Eigen::Index peak = 0;
  prof.row(0).cwiseAbs().maxCoeff(&peak);
  CHECK(std::abs(peak - 205) <= 1);
}

TEST_CASE("wall echo is rank one, linear in amplitude and zero at zero amplitude") {
  RadarConfig cfg;
  CHECK(sim::wall_echo(cfg, 0.0).isZero(0.0));
  const CMatrix w1 = sim::wall_echo(cfg, 1.0);
  const CMatrix w2 = sim::wall_echo(cfg, 2.0);
  CHECK(w2 == (2.0 * w1).eval());
  const auto svd = subspace::svd_full(w1);
  CHECK(svd.sigma(1) / svd.sigma(0) < 1e-12);
  CHECK_THROWS_AS(sim::wall_echo(cfg, -1.0), ValueError);
}

TEST_CASE("noise: disabled sentinel, power and reproducibility") {
  RadarConfig cfg;
  const CMatrix ones = CMatrix::Ones(static_cast<Eigen::Index>(cfg.M), static_cast<Eigen::Index>(cfg.K));
  Rng r0(3);
  CHECK(sim::add_noise(ones, sim::kNoNoise, r0) == ones);

  Rng a(5), b(5);
  const CMatrix na = sim::add_noise(ones, 0.0, a);
  const CMatrix nb = sim::add_noise(ones, 0.0, b);
  CHECK(na == nb);
  REQUIRE(ones.size() >= 10000);
  const double power = (na - ones).squaredNorm() / static_cast<double>(ones.size());
  CHECK(std::abs(power - 1.0) < 0.05);
  CHECK_THROWS_AS(sim::add_noise(CMatrix::Zero(4, 4), 0.0, a), ValueError);
}

TEST_CASE("superposition of scatterer sets") {
  RadarConfig cfg;
  Rng rng(12);
  const auto a = sim::generate_trajectory(sim::MotionState::walk_parallel, cfg, rng);
  const auto b = sim::generate_trajectory(sim::MotionState::squat_up, cfg, rng);
  auto both = a;
  both.insert(both.end(), b.begin(), b.end());
  const CMatrix sum = sim::scatterer_echo(a, cfg) + sim::scatterer_echo(b, cfg);
  CHECK((sim::scatterer_echo(both, cfg) - sum).cwiseAbs().maxCoeff() < 1e-10);

  sim::Scene s{sim::MotionState::walk_parallel, a, 0.0, sim::kNoNoise};
  Rng n(0);
  CHECK(sim::synthesize_echo(s, cfg, n) == sim::clean_target(s, cfg));
}

TEST_CASE("noiseless frame magnitude is bounded by the summed amplitudes") {
  RadarConfig cfg;
  Rng rng(4);
  sim::SceneOptions opts;
  opts.snr_db = sim::kNoNoise;
  const sim::Scene s = sim::make_scene(sim::MotionState::diagonal_round_trip, cfg, rng, opts);
  double bound = s.wall_amplitude * 1.3;
  for (const auto& sc : s.scatterers) bound += sc.amplitude;
  Rng n(0);
  CHECK(sim::synthesize_echo(s, cfg, n).cwiseAbs().maxCoeff() <= bound + 1e-12);
}

TEST_CASE("wall component vanishes under slow-time differencing") {
  RadarConfig cfg;
  const CMatrix w = sim::wall_echo(cfg, 50.0);
  CHECK(pre::mti(w).cwiseAbs().maxCoeff() < 1e-12 * w.cwiseAbs().maxCoeff());
}

TEST_CASE("scene json round-trip keeps the infinite snr sentinel") {
  RadarConfig cfg;
  Rng rng(9);
  sim::SceneOptions opts;
  opts.snr_db = sim::kNoNoise;
  const sim::Scene s = sim::make_scene(sim::MotionState::squat_up, cfg, rng, opts);
  const sim::Scene back = nlohmann::json(s).get<sim::Scene>();
  CHECK(back.state == s.state);
  CHECK(std::isinf(back.snr_db));
  REQUIRE(back.scatterers.size() == s.scatterers.size());
  for (std::size_t i = 0; i < s.scatterers.size(); ++i) CHECK(back.scatterers[i].range_m == s.scatterers[i].range_m);
}

TEST_CASE("frames are independent of generation order") {
  RadarConfig cfg;
  const auto f3 = pipeline::simulate_frame(sim::MotionState::walk_parallel, 3, 99, cfg);
  pipeline::simulate_frame(sim::MotionState::walk_parallel, 1, 99, cfg);
  const auto again = pipeline::simulate_frame(sim::MotionState::walk_parallel, 3, 99, cfg);
  CHECK(f3.echo == again.echo);
  const auto other = pipeline::simulate_frame(sim::MotionState::walk_parallel, 4, 99, cfg);
  CHECK(f3.echo != other.echo);
}

// The wall rule classifies every singular value at or above
// mean - alpha * std as wall, so sigma_1 of a clean frame always lands in the
// wall set and the target share stays far below 95%. Pinned as an expected
// failure; see the decisions ledger.
TEST_CASE("clean walking frame energy lands in the target subspace" * doctest::should_fail()) {
  RadarConfig cfg;
  const auto f = pipeline::simulate_frame(sim::MotionState::walk_perpendicular, 0, 5, cfg);
  const CMatrix phi = pre::mti(pre::range_profile(f.clean, cfg).data);
  const auto g = pre::gate_bins(cfg, static_cast<std::size_t>(phi.cols()));
  const CMatrix gated = phi.middleCols(static_cast<Eigen::Index>(g.first), static_cast<Eigen::Index>(g.count()));
  subspace::SeparationParams sp;
  sp.alpha = pipeline::scene_alpha(f.scene);
  const auto t = subspace::svd_separate(gated, sp);
  CHECK(t.target.squaredNorm() > 0.95 * gated.squaredNorm());
}
