#include "twrmcae/config.hpp"

#include <cmath>
#include <fstream>

#include "twrmcae/error.hpp"

namespace twrmcae {

void RadarConfig::validate() const {
  if (!(f0 > 0)) throw ValueError("f0 must be > 0");
  if (!(delta_f > 0)) throw ValueError("delta_f must be > 0");
  if (K < 2) throw ValueError("K must be >= 2");
  if (M < 2) throw ValueError("M must be >= 2");
  if (N < K) throw ValueError("N must be >= K");
  if (!(frame_duration > 0)) throw ValueError("frame_duration must be > 0");
  if (!(wall_thickness >= 0)) throw ValueError("wall_thickness must be >= 0");
  if (!(wall_eps_r >= 1)) throw ValueError("wall_eps_r must be >= 1");
  if (!(range_gate_min < range_gate_max)) throw ValueError("range_gate min must be < max");
}

double RadarConfig::wall_excess_m() const {
  return wall_thickness * (std::sqrt(wall_eps_r) - 1.0);
}

void to_json(nlohmann::json& j, const RadarConfig& c) {
  j = nlohmann::json{{"f0", c.f0},
                     {"delta_f", c.delta_f},
                     {"K", c.K},
                     {"M", c.M},
                     {"frame_duration", c.frame_duration},
                     {"N", c.N},
                     {"wall_thickness", c.wall_thickness},
                     {"wall_eps_r", c.wall_eps_r},
                     {"range_gate", {c.range_gate_min, c.range_gate_max}}};
}

void from_json(const nlohmann::json& j, RadarConfig& c) {
  RadarConfig d;
  c.f0 = j.value("f0", d.f0);
  c.delta_f = j.value("delta_f", d.delta_f);
  c.K = j.value("K", d.K);
  c.M = j.value("M", d.M);
  c.frame_duration = j.value("frame_duration", d.frame_duration);
  c.N = j.value("N", d.N);
  c.wall_thickness = j.value("wall_thickness", d.wall_thickness);
  c.wall_eps_r = j.value("wall_eps_r", d.wall_eps_r);
  if (j.contains("range_gate")) {
    const auto& g = j.at("range_gate");
    if (!g.is_array() || g.size() != 2) throw ValueError("range_gate must be [min, max]");
    c.range_gate_min = g[0].get<double>();
    c.range_gate_max = g[1].get<double>();
  } else {
    c.range_gate_min = d.range_gate_min;
    c.range_gate_max = d.range_gate_max;
  }
  c.validate();
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace twrmcae
