#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "twrmcae/config.hpp"
#include "twrmcae/tensor.hpp"

namespace twrmcae::pre {

/// Slow time x range bin complex profile.
struct RangeProfile {
  CMatrix data;
  double range_bin_m = 0.0;
};

/// Rendering constants of the RTM / DTM chain.
struct RenderOptions {
  std::size_t height = 64;
  std::size_t width = 64;
  double dynamic_range_db = 40.0;
  double magnitude_floor = 1e-12;
  std::size_t stft_window = 32;
  std::size_t stft_hop = 4;
};

/// Row-wise zero-padded length-N inverse DFT with the 1/N convention.
RangeProfile range_profile(const CMatrix& echo, const RadarConfig& cfg);

/// Slow-time first difference: row m of the result is row m+1 minus row m.
CMatrix mti(const CMatrix& profile);

/// Half-open column interval [first, last) of range bins whose apparent
/// range lies inside the configured gate.
struct GateBins {
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t count() const { return last - first; }
};
GateBins gate_bins(const RadarConfig& cfg, std::size_t n_bins);

/// Pseudo-colour lookup, piecewise linear through
/// (0,0,.5) (0,.5,1) (0,1,.5) (1,1,0) (1,0,0) at t = 0, .25, .5, .75, 1.
std::array<double, 3> colormap(double t);

/// Peak of 20 log10(|x| + floor) over a magnitude map, or nullopt when the map is all zero.
std::optional<double> peak_db(const RMatrix& magnitude, const RenderOptions& opts = {});

/// dB -> clip to [peak - range, peak] -> [0,1] -> colour -> bilinear resize.
/// `reference_peak_db` substitutes the peak of another map (shared
/// normalisation); without it, an all-zero map renders as colormap(0).
Tensor render_magnitude(const RMatrix& magnitude, const RenderOptions& opts = {},
                        std::optional<double> reference_peak_db = std::nullopt);

/// |phi| restricted to the range gate, laid out range (rows) x slow time (cols).
RMatrix rtm_magnitude(const CMatrix& phi, const RadarConfig& cfg);
/// Short-time spectrum magnitude averaged over the gated bins, laid out
/// Doppler (rows, most negative first) x STFT frame (cols).
RMatrix dtm_magnitude(const CMatrix& phi, const RadarConfig& cfg, const RenderOptions& opts = {});

Tensor build_rtm(const CMatrix& phi, const RadarConfig& cfg, const RenderOptions& opts = {},
                 std::optional<double> reference_peak_db = std::nullopt);
Tensor build_dtm(const CMatrix& phi, const RadarConfig& cfg, const RenderOptions& opts = {},
                 std::optional<double> reference_peak_db = std::nullopt);

/// Analytic signal by the frequency-domain construction (positive bins
/// doubled, negative zeroed, DC / Nyquist kept). Real part equals x.
std::vector<cdouble> hilbert(std::span<const double> x);

/// Doppler frequency (Hz) of DTM row `row` before resizing.
double dtm_row_frequency(std::size_t row, const RadarConfig& cfg, const RenderOptions& opts = {});

}  // namespace twrmcae::pre
