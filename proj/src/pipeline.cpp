#include "twrmcae/pipeline.hpp"

#include "twrmcae/error.hpp"

namespace twrmcae::pipeline {

namespace {

RMatrix magnitude(const CMatrix& phi, const RadarConfig& cfg, MapKind kind,
                  const pre::RenderOptions& opts) {
  return kind == MapKind::rtm ? pre::rtm_magnitude(phi, cfg) : pre::dtm_magnitude(phi, cfg, opts);
}

Tensor build(const CMatrix& phi, const RadarConfig& cfg, MapKind kind, const pre::RenderOptions& opts,
             std::optional<double> peak) {
  return kind == MapKind::rtm ? pre::build_rtm(phi, cfg, opts, peak) : pre::build_dtm(phi, cfg, opts, peak);
}

CMatrix embed(const CMatrix& gated, const pre::GateBins& g, Eigen::Index rows, Eigen::Index cols) {
  CMatrix full = CMatrix::Zero(rows, cols);
  full.middleCols(static_cast<Eigen::Index>(g.first), static_cast<Eigen::Index>(g.count())) = gated;
  return full;
}

}  // namespace

std::string_view kind_name(MapKind k) { return k == MapKind::rtm ? "rtm" : "dtm"; }

MapKind parse_kind(std::string_view name) {
  if (name == "rtm") return MapKind::rtm;
  if (name == "dtm") return MapKind::dtm;
  throw ValueError("unknown map kind: " + std::string(name));
}

Frame simulate_frame(sim::MotionState state, std::uint64_t index, std::uint64_t seed,
                     const RadarConfig& cfg, const sim::SceneOptions& opts) {
  const auto label = static_cast<std::uint64_t>(sim::state_label(state));
  const Rng base(seed, label);
  Rng scene_rng = base.substream(2 * index);
  Rng noise_rng = base.substream(2 * index + 1);
  Frame f;
  f.scene = sim::make_scene(state, cfg, scene_rng, opts);
  f.echo = sim::synthesize_echo(f.scene, cfg, noise_rng);
  f.clean = sim::clean_target(f.scene, cfg);
  return f;
}

double scene_alpha(const sim::Scene& scene, double fallback) {
  if (scene.scatterers.empty()) return fallback;
  double s = 0.0;
  for (const auto& sc : scene.scatterers) s += sc.amplitude;
  const double a = s / static_cast<double>(scene.scatterers.size());
  return a > 0 ? a : fallback;
}

MatrixImages render_with_subspaces(const CMatrix& echo, const RadarConfig& cfg, MapKind kind,
                                   double alpha, const pre::RenderOptions& opts) {
  const pre::RangeProfile prof = pre::range_profile(echo, cfg);
  const CMatrix phi = pre::mti(prof.data);
  const pre::GateBins g = pre::gate_bins(cfg, static_cast<std::size_t>(phi.cols()));
  if (g.count() == 0) throw ValueError("no bins in range gate");
  const CMatrix gated =
      phi.middleCols(static_cast<Eigen::Index>(g.first), static_cast<Eigen::Index>(g.count()));

  MatrixImages out;
  const std::optional<double> peak = pre::peak_db(magnitude(phi, cfg, kind, opts), opts);
  out.image = build(phi, cfg, kind, opts, peak);
  subspace::SeparationParams sp;
  sp.alpha = alpha;
  const subspace::SubspaceTriple t = subspace::svd_separate(gated, sp, &out.report);
  const std::array<const CMatrix*, 3> parts{&t.target, &t.wall, &t.noise};
  for (std::size_t i = 0; i < 3; ++i)
    out.subspaces[i] = build(embed(*parts[i], g, phi.rows(), phi.cols()), cfg, kind, opts, peak);
  return out;
}

Tensor render(const CMatrix& echo, const RadarConfig& cfg, MapKind kind, const pre::RenderOptions& opts) {
  const CMatrix phi = pre::mti(pre::range_profile(echo, cfg).data);
  return build(phi, cfg, kind, opts, std::nullopt);
}

Sample make_sample(const Frame& frame, const RadarConfig& cfg, MapKind kind, const pre::RenderOptions& opts) {
  const double alpha = scene_alpha(frame.scene);
  MatrixImages noisy = render_with_subspaces(frame.echo, cfg, kind, alpha, opts);
  MatrixImages clean = render_with_subspaces(frame.clean, cfg, kind, alpha, opts);
  Sample s;
  s.state = frame.scene.state;
  s.raw = std::move(noisy.image);
  s.clean = std::move(clean.image);
  s.noisy_sub = std::move(noisy.subspaces);
  s.clean_sub = std::move(clean.subspaces);
  return s;
}

}  // namespace twrmcae::pipeline
