#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

#include "twrmcae/config.hpp"
#include "twrmcae/preprocess.hpp"
#include "twrmcae/sim.hpp"
#include "twrmcae/subspace.hpp"
#include "twrmcae/tensor.hpp"

// Frame -> image glue shared by the CLI, the trainer data path and the tests.
namespace twrmcae::pipeline {

enum class MapKind { rtm, dtm };
std::string_view kind_name(MapKind k);
MapKind parse_kind(std::string_view name);

/// One simulated frame: scene, received echo and its clean counterpart.
struct Frame {
  sim::Scene scene;
  CMatrix echo;
  CMatrix clean;
};

/// Frame `index` of `state` under `seed`. Scene and noise draw from separate
/// substreams keyed by (state, index), so frames can be generated in any order.
Frame simulate_frame(sim::MotionState state, std::uint64_t index, std::uint64_t seed,
                     const RadarConfig& cfg, const sim::SceneOptions& opts = {});

/// Separation multiplier for a scene: the mean scatterer amplitude, or
/// `fallback` for an empty scene.
double scene_alpha(const sim::Scene& scene, double fallback = 1.0);

/// Images derived from one complex echo.
struct MatrixImages {
  Tensor image;                      // whole frame
  std::array<Tensor, 3> subspaces;   // target, wall, noise
  subspace::SeparationReport report;
};

/// range profile -> MTI -> gate -> SVD separation. Each subspace matrix is
/// embedded back into the full range axis and rendered with the peak of the
/// whole frame, so the four images share one colour scale.
MatrixImages render_with_subspaces(const CMatrix& echo, const RadarConfig& cfg, MapKind kind,
                                   double alpha, const pre::RenderOptions& opts = {});

/// Whole-frame image only.
Tensor render(const CMatrix& echo, const RadarConfig& cfg, MapKind kind,
              const pre::RenderOptions& opts = {});

/// Network sample: noisy subspace images, clean subspace images (the loss
/// target) and the two whole-frame images used for PSNR.
struct Sample {
  sim::MotionState state = sim::MotionState::empty;
  Tensor raw;
  Tensor clean;
  std::array<Tensor, 3> noisy_sub;
  std::array<Tensor, 3> clean_sub;
};

Sample make_sample(const Frame& frame, const RadarConfig& cfg, MapKind kind,
                   const pre::RenderOptions& opts = {});

}  // namespace twrmcae::pipeline
