#include "twrmcae/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "twrmcae/error.hpp"

namespace twrmcae::sim {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMultipathRatio = 0.3;

struct LimbMotion {
  double amp_lo, amp_hi;    // m
  double freq_lo, freq_hi;  // Hz
};

// Per-state limb swing ranges. Walking limbs swing harder than in-place motion.
LimbMotion limb_motion(MotionState s) {
  switch (s) {
    case MotionState::facing_wall: return {0.10, 0.20, 0.6, 1.0};
    case MotionState::parallel_to_wall: return {0.04, 0.10, 0.6, 1.0};
    case MotionState::squat_up: return {0.05, 0.12, 0.3, 0.5};
    case MotionState::walk_parallel:
    case MotionState::walk_perpendicular:
    case MotionState::diagonal_round_trip: return {0.15, 0.30, 0.8, 1.2};
    case MotionState::empty: break;
  }
  return {0, 0, 0, 0};
}

}  // namespace

std::string_view state_name(MotionState s) {
  switch (s) {
    case MotionState::empty: return "empty";
    case MotionState::facing_wall: return "facing_wall";
    case MotionState::parallel_to_wall: return "parallel_to_wall";
    case MotionState::squat_up: return "squat_up";
    case MotionState::walk_parallel: return "walk_parallel";
    case MotionState::walk_perpendicular: return "walk_perpendicular";
    case MotionState::diagonal_round_trip: return "diagonal_round_trip";
  }
  return "unknown";
}

MotionState parse_state(std::string_view name) {
  for (MotionState s : kAllStates)
    if (state_name(s) == name) return s;
  throw ValueError("unknown motion state: " + std::string(name));
}

int state_label(MotionState s) { return static_cast<int>(s); }

std::vector<Scatterer> generate_trajectory(MotionState state, const RadarConfig& cfg, Rng& rng,
                                           const KinematicsConfig& kin) {
  cfg.validate();
  if (state == MotionState::empty) return {};

  const std::size_t M = cfg.M;
  const double T = cfg.frame_duration;
  auto time_of = [&](std::size_t m) { return static_cast<double>(m) * T / static_cast<double>(M); };

  const double travel = std::min(kin.walk_speed * T, kin.max_travel);
  const double speed = travel / T;
  std::vector<double> torso(M);

  switch (state) {
    case MotionState::facing_wall:
    case MotionState::parallel_to_wall:
    case MotionState::squat_up: {
      const double r0 = rng.uniform(2.8, 3.2);
      const bool squat = state == MotionState::squat_up;
      const double amp = squat ? rng.uniform(0.15, 0.25) : rng.uniform(0.01, 0.03);
      const double freq = squat ? rng.uniform(0.3, 0.5) : rng.uniform(0.2, 0.4);
      const double phase = rng.uniform(0.0, kTwoPi);
      for (std::size_t m = 0; m < M; ++m)
        torso[m] = r0 + amp * std::sin(kTwoPi * freq * time_of(m) + phase);
      break;
    }
    case MotionState::walk_perpendicular: {
      const double dir = rng.uniform() < 0.5 ? 1.0 : -1.0;
      const double start = 3.5 - dir * travel / 2.0;
      for (std::size_t m = 0; m < M; ++m) torso[m] = start + dir * speed * time_of(m);
      break;
    }
    case MotionState::walk_parallel: {
      const double lateral = rng.uniform(2.8, 3.2);
      const double dir = rng.uniform() < 0.5 ? 1.0 : -1.0;
      for (std::size_t m = 0; m < M; ++m) {
        const double x = dir * (-travel / 2.0 + speed * time_of(m));
        torso[m] = std::hypot(lateral, x);
      }
      break;
    }
    case MotionState::diagonal_round_trip: {
      const double start = rng.uniform(2.2, 2.6);
      const double radial_speed = speed * std::numbers::sqrt2 / 2.0;
      for (std::size_t m = 0; m < M; ++m) {
        const double t = time_of(m);
        torso[m] = start + radial_speed * (T / 2.0 - std::abs(t - T / 2.0));
      }
      break;
    }
    case MotionState::empty: break;
  }

  std::vector<Scatterer> out;
  out.push_back({1.0, torso});

  Scatterer head{0.3, torso};
  const double head_offset = rng.uniform(-0.05, 0.05);
  for (double& r : head.range_m) r += head_offset;
  out.push_back(std::move(head));

  const LimbMotion lm = limb_motion(state);
  const auto limbs = static_cast<std::size_t>(rng.uniform_int(2, 4));
  const double gait = rng.uniform(lm.freq_lo, lm.freq_hi);
  const double gait_phase = rng.uniform(0.0, kTwoPi);
  for (std::size_t l = 0; l < limbs; ++l) {
    Scatterer limb{rng.uniform(0.2, 0.5), torso};
    const double amp = rng.uniform(lm.amp_lo, lm.amp_hi);
    const double offset = rng.uniform(-0.1, 0.1);
    // Alternate limbs swing in antiphase.
    const double phase = gait_phase + (l % 2 == 0 ? 0.0 : std::numbers::pi);
    for (std::size_t m = 0; m < M; ++m)
      limb.range_m[m] += offset + amp * std::sin(kTwoPi * gait * time_of(m) + phase);
    out.push_back(std::move(limb));
  }

  for (auto& s : out)
    for (double& r : s.range_m) r = std::clamp(r, kin.min_range, kin.max_range);
  return out;
}

Scene make_scene(MotionState state, const RadarConfig& cfg, Rng& rng, const SceneOptions& opts) {
  Scene s;
  s.state = state;
  s.scatterers = generate_trajectory(state, cfg, rng, opts.kinematics);
  s.wall_amplitude = opts.wall_amplitude;
  s.snr_db = opts.snr_db;
  return s;
}

double scatterer_delay(double range_m, const RadarConfig& cfg) {
  return 2.0 * (range_m + cfg.wall_excess_m()) / kSpeedOfLight;
}

double wall_delay(const RadarConfig& cfg) {
  return 2.0 * cfg.wall_thickness * std::sqrt(cfg.wall_eps_r) / kSpeedOfLight;
}

CMatrix scatterer_echo(const std::vector<Scatterer>& scatterers, const RadarConfig& cfg) {
  cfg.validate();
  const auto M = static_cast<Eigen::Index>(cfg.M), K = static_cast<Eigen::Index>(cfg.K);
  CMatrix out = CMatrix::Zero(M, K);
  for (const auto& sc : scatterers) {
    if (sc.range_m.size() != cfg.M) throw ShapeError("scatterer trajectory length != M");
    if (sc.amplitude < 0) throw ValueError("scatterer amplitude must be >= 0");
    for (Eigen::Index m = 0; m < M; ++m) {
      const double tau = scatterer_delay(sc.range_m[static_cast<std::size_t>(m)], cfg);
      for (Eigen::Index k = 0; k < K; ++k) {
        const double f = cfg.f0 + static_cast<double>(k) * cfg.delta_f;
        out(m, k) += sc.amplitude * std::polar(1.0, -kTwoPi * f * tau);
      }
    }
  }
  return out;
}

CMatrix wall_echo(const RadarConfig& cfg, double amplitude) {
  cfg.validate();
  if (amplitude < 0) throw ValueError("wall amplitude must be >= 0");
  const auto M = static_cast<Eigen::Index>(cfg.M), K = static_cast<Eigen::Index>(cfg.K);
  const double tau = wall_delay(cfg);
  Eigen::Matrix<cdouble, 1, Eigen::Dynamic> row(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const double f = cfg.f0 + static_cast<double>(k) * cfg.delta_f;
    row(k) = amplitude * (std::polar(1.0, -kTwoPi * f * tau) +
                          kMultipathRatio * std::polar(1.0, -kTwoPi * f * 2.0 * tau));
  }
  return row.replicate(M, 1);
}

CMatrix add_noise(const CMatrix& echo, double snr_db, Rng& rng) {
  if (echo.size() == 0) throw ValueError("add_noise: empty echo");
  if (std::isinf(snr_db) && snr_db > 0) return echo;
  const double power = echo.squaredNorm() / static_cast<double>(echo.size());
  if (power == 0.0) throw ValueError("undefined SNR reference");
  const double noise_power = power / std::pow(10.0, snr_db / 10.0);
  const double sd = std::sqrt(noise_power / 2.0);
  CMatrix out = echo;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double re = rng.normal(), im = rng.normal();
    out.data()[i] += cdouble(sd * re, sd * im);
  }
  return out;
}

CMatrix synthesize_echo(const Scene& scene, const RadarConfig& cfg, Rng& noise_rng) {
  CMatrix echo = scatterer_echo(scene.scatterers, cfg);
  if (scene.wall_amplitude > 0) echo += wall_echo(cfg, scene.wall_amplitude);
  return add_noise(echo, scene.snr_db, noise_rng);
}

CMatrix clean_target(const Scene& scene, const RadarConfig& cfg) {
  return scatterer_echo(scene.scatterers, cfg);
}

void to_json(nlohmann::json& j, const Scene& s) {
  nlohmann::json sc = nlohmann::json::array();
  for (const auto& p : s.scatterers) sc.push_back({{"amplitude", p.amplitude}, {"range_m", p.range_m}});
  j = nlohmann::json{{"state", state_name(s.state)},
                     {"scatterers", sc},
                     {"wall_amplitude", s.wall_amplitude},
                     {"snr_db", std::isinf(s.snr_db) ? nlohmann::json("inf") : nlohmann::json(s.snr_db)}};
}

void from_json(const nlohmann::json& j, Scene& s) {
  s.state = parse_state(j.at("state").get<std::string>());
  s.scatterers.clear();
  for (const auto& p : j.value("scatterers", nlohmann::json::array()))
    s.scatterers.push_back({p.at("amplitude").get<double>(), p.at("range_m").get<std::vector<double>>()});
  s.wall_amplitude = j.value("wall_amplitude", 0.0);
  const auto& snr = j.at("snr_db");
  s.snr_db = snr.is_string() ? kNoNoise : snr.get<double>();
}

}  // namespace twrmcae::sim
