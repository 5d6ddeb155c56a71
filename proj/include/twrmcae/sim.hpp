#pragma once

#include <array>
#include <limits>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "twrmcae/config.hpp"
#include "twrmcae/rng.hpp"
#include "twrmcae/tensor.hpp"

namespace twrmcae::sim {

enum class MotionState {
  empty,
  facing_wall,
  parallel_to_wall,
  squat_up,
  walk_parallel,
  walk_perpendicular,
  diagonal_round_trip,
};

inline constexpr std::array<MotionState, 7> kAllStates{
    MotionState::empty,         MotionState::facing_wall,        MotionState::parallel_to_wall,
    MotionState::squat_up,      MotionState::walk_parallel,      MotionState::walk_perpendicular,
    MotionState::diagonal_round_trip};

std::string_view state_name(MotionState s);
/// Accepts the snake_case names returned by state_name.
MotionState parse_state(std::string_view name);
int state_label(MotionState s);

/// Point scatterer with a constant reflectivity and a per-sweep range track.
struct Scatterer {
  double amplitude = 0.0;
  std::vector<double> range_m;  // length M
};

/// Sentinel SNR meaning "noise disabled".
inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

struct Scene {
  MotionState state = MotionState::empty;
  std::vector<Scatterer> scatterers;
  double wall_amplitude = 0.0;
  double snr_db = kNoNoise;
};

/// Knobs of the invented body kinematics.
struct KinematicsConfig {
  double walk_speed = 0.75;    // m/s, torso speed of the walking states
  double max_travel = 3.0;     // m, walking travel is capped so tracks stay in [2, 5] m
  double min_range = 1.5;      // m, hard bounds every track must respect
  double max_range = 6.0;
};

struct SceneOptions {
  double wall_amplitude = 5.0;
  double snr_db = 10.0;
  KinematicsConfig kinematics{};
};

/// Torso + head + limb scatterers for one frame of `state`. Scatterer 0 is
/// always the torso.
std::vector<Scatterer> generate_trajectory(MotionState state, const RadarConfig& cfg, Rng& rng,
                                           const KinematicsConfig& kin = {});

Scene make_scene(MotionState state, const RadarConfig& cfg, Rng& rng,
                 const SceneOptions& opts = {});

/// Two-way delay of a scatterer at `range_m` behind the wall.
double scatterer_delay(double range_m, const RadarConfig& cfg);
/// Direct wall return delay 2 d sqrt(eps_r) / c.
double wall_delay(const RadarConfig& cfg);

/// Sum over scatterers of a_p exp(-j 2 pi (f0 + k df) tau_p(m)); M x K.
CMatrix scatterer_echo(const std::vector<Scatterer>& scatterers, const RadarConfig& cfg);

/// Rank-1 wall clutter: identical rows holding the direct return plus a 0.3
/// multipath replica at twice the delay, scaled by `amplitude`.
CMatrix wall_echo(const RadarConfig& cfg, double amplitude);

/// Adds circular complex Gaussian noise at `snr_db` relative to the mean
/// squared magnitude of `echo`. snr_db = +inf returns the input unchanged.
CMatrix add_noise(const CMatrix& echo, double snr_db, Rng& rng);

/// Full received frame: scatterers + wall (if amplitude > 0) + noise (if finite SNR).
CMatrix synthesize_echo(const Scene& scene, const RadarConfig& cfg, Rng& noise_rng);
/// Ground truth: scatterers only.
CMatrix clean_target(const Scene& scene, const RadarConfig& cfg);

void to_json(nlohmann::json& j, const Scene& s);
void from_json(const nlohmann::json& j, Scene& s);

}  // namespace twrmcae::sim
