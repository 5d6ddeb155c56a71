#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace twrmcae {

inline constexpr double kSpeedOfLight = 299792458.0;

/// Stepped-frequency radar and wall parameters shared by simulation and imaging.
struct RadarConfig {
  double f0 = 0.5e9;             // Hz, first frequency step
  double delta_f = 10e6;         // Hz
  std::size_t K = 200;           // frequency points
  std::size_t M = 256;           // slow-time sweeps per frame
  double frame_duration = 4.0;   // s
  std::size_t N = 1024;          // IFFT grid
  double wall_thickness = 0.23;  // m
  double wall_eps_r = 7.4;
  double range_gate_min = 1.5;   // m
  double range_gate_max = 6.0;   // m

  /// Throws ValueError when an invariant is violated.
  void validate() const;

  double range_bin_m() const { return kSpeedOfLight / (2.0 * static_cast<double>(N) * delta_f); }
  double sweep_rate_hz() const { return static_cast<double>(M) / frame_duration; }
  /// One-way extra path through the wall relative to free space.
  double wall_excess_m() const;
};

void to_json(nlohmann::json& j, const RadarConfig& c);
void from_json(const nlohmann::json& j, RadarConfig& c);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const nlohmann::json& j, const std::filesystem::path& path);

}  // namespace twrmcae
