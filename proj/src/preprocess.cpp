#include "twrmcae/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "twrmcae/error.hpp"
#include "twrmcae/fft.hpp"
#include "twrmcae/image.hpp"

namespace twrmcae::pre {

RangeProfile range_profile(const CMatrix& echo, const RadarConfig& cfg) {
  const auto M = echo.rows(), K = echo.cols();
  const auto N = static_cast<Eigen::Index>(cfg.N);
  if (K > N) throw ShapeError("range_profile: K > N");
  RangeProfile out{CMatrix::Zero(M, N), cfg.range_bin_m()};
  std::vector<cdouble> row(static_cast<std::size_t>(N));
  for (Eigen::Index m = 0; m < M; ++m) {
    std::fill(row.begin(), row.end(), cdouble{});
    for (Eigen::Index k = 0; k < K; ++k) row[static_cast<std::size_t>(k)] = echo(m, k);
    fft::inverse(row);
    for (Eigen::Index r = 0; r < N; ++r) out.data(m, r) = row[static_cast<std::size_t>(r)];
  }
  return out;
}

CMatrix mti(const CMatrix& profile) {
  const auto M = profile.rows();
  if (M < 2) throw ValueError("mti needs at least 2 slow-time rows");
  return profile.bottomRows(M - 1) - profile.topRows(M - 1);
}

GateBins gate_bins(const RadarConfig& cfg, std::size_t n_bins) {
  const double dr = cfg.range_bin_m();
  GateBins g{n_bins, n_bins};
  for (std::size_t r = 0; r < n_bins; ++r) {
    const double range = static_cast<double>(r) * dr;
    if (range >= cfg.range_gate_min && range <= cfg.range_gate_max) {
      if (g.first == n_bins) g.first = r;
      g.last = r + 1;
    }
  }
  if (g.first == n_bins) g.first = g.last = 0;
  return g;
}

std::array<double, 3> colormap(double t) {
  static constexpr std::array<std::array<double, 3>, 5> kStops{{
      {0.0, 0.0, 0.5}, {0.0, 0.5, 1.0}, {0.0, 1.0, 0.5}, {1.0, 1.0, 0.0}, {1.0, 0.0, 0.0}}};
  t = std::clamp(t, 0.0, 1.0);
  const double pos = t * 4.0;
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(pos), 3);
  const double f = pos - static_cast<double>(i);
  std::array<double, 3> rgb{};
  for (std::size_t c = 0; c < 3; ++c) rgb[c] = kStops[i][c] + f * (kStops[i + 1][c] - kStops[i][c]);
  return rgb;
}

std::optional<double> peak_db(const RMatrix& magnitude, const RenderOptions& opts) {
  if (magnitude.size() == 0) return std::nullopt;
  const double peak = magnitude.maxCoeff();
  if (!(peak > 0.0)) return std::nullopt;
  return 20.0 * std::log10(peak + opts.magnitude_floor);
}

Tensor render_magnitude(const RMatrix& magnitude, const RenderOptions& opts,
                        std::optional<double> reference_peak_db) {
  if (magnitude.size() == 0) throw ShapeError("render: empty magnitude map");
  const auto h = static_cast<std::size_t>(magnitude.rows());
  const auto w = static_cast<std::size_t>(magnitude.cols());
  const std::optional<double> peak = reference_peak_db ? reference_peak_db : peak_db(magnitude, opts);
  Tensor colour({3, h, w});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      double t = 0.0;
      if (peak) {
        const double db = 20.0 * std::log10(magnitude(static_cast<Eigen::Index>(i),
                                                      static_cast<Eigen::Index>(j)) +
                                            opts.magnitude_floor);
        const double lo = *peak - opts.dynamic_range_db;
        t = (std::clamp(db, lo, *peak) - lo) / opts.dynamic_range_db;
      }
      const auto rgb = colormap(t);
      for (std::size_t c = 0; c < 3; ++c) colour.at(c, i, j) = rgb[c];
    }
  }
  return image::resize_bilinear(colour, opts.height, opts.width);
}

RMatrix rtm_magnitude(const CMatrix& phi, const RadarConfig& cfg) {
  if (phi.size() == 0) throw ShapeError("build_rtm: empty input");
  const GateBins g = gate_bins(cfg, static_cast<std::size_t>(phi.cols()));
  if (g.count() == 0) throw ValueError("no bins in range gate");
  return phi.middleCols(static_cast<Eigen::Index>(g.first), static_cast<Eigen::Index>(g.count()))
      .cwiseAbs()
      .transpose();
}

RMatrix dtm_magnitude(const CMatrix& phi, const RadarConfig& cfg, const RenderOptions& opts) {
  const GateBins g = gate_bins(cfg, static_cast<std::size_t>(phi.cols()));
  if (g.count() == 0) throw ValueError("no bins in range gate");
  const auto L = static_cast<std::size_t>(phi.rows());
  const std::size_t win = opts.stft_window, hop = opts.stft_hop;
  if (win == 0 || hop == 0 || L < win) throw ShapeError("build_dtm: slow-time length shorter than STFT window");
  const std::size_t frames = (L - win) / hop + 1;

  std::vector<double> hann(win);
  for (std::size_t n = 0; n < win; ++n)
    hann[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                   static_cast<double>(win));

  RMatrix acc = RMatrix::Zero(static_cast<Eigen::Index>(win), static_cast<Eigen::Index>(frames));
  std::vector<cdouble> buf(win);
  for (std::size_t bin = g.first; bin < g.last; ++bin) {
    for (std::size_t f = 0; f < frames; ++f) {
      for (std::size_t n = 0; n < win; ++n)
        buf[n] = phi(static_cast<Eigen::Index>(f * hop + n), static_cast<Eigen::Index>(bin)) * hann[n];
      fft::forward(buf);
      for (std::size_t k = 0; k < win; ++k) {
        const std::size_t row = (k + win / 2) % win;  // zero frequency lands on row win/2
        acc(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(f)) += std::abs(buf[k]);
      }
    }
  }
  acc /= static_cast<double>(g.count());
  return acc;
}

Tensor build_rtm(const CMatrix& phi, const RadarConfig& cfg, const RenderOptions& opts,
                 std::optional<double> reference_peak_db) {
  return render_magnitude(rtm_magnitude(phi, cfg), opts, reference_peak_db);
}

Tensor build_dtm(const CMatrix& phi, const RadarConfig& cfg, const RenderOptions& opts,
                 std::optional<double> reference_peak_db) {
  return render_magnitude(dtm_magnitude(phi, cfg, opts), opts, reference_peak_db);
}

std::vector<cdouble> hilbert(std::span<const double> x) {
  const std::size_t L = x.size();
  if (L < 4) throw ValueError("hilbert needs at least 4 samples");
  std::vector<cdouble> spec(x.begin(), x.end());
  fft::forward(spec);
  const std::size_t half = L / 2;
  for (std::size_t k = 1; k < L; ++k) {
    if (L % 2 == 0 && k == half) continue;
    if (k <= (L - 1) / 2)
      spec[k] *= 2.0;
    else
      spec[k] = 0.0;
  }
  fft::inverse(spec);
  for (std::size_t n = 0; n < L; ++n) spec[n] = {x[n], spec[n].imag()};
  return spec;
}

double dtm_row_frequency(std::size_t row, const RadarConfig& cfg, const RenderOptions& opts) {
  const double win = static_cast<double>(opts.stft_window);
  return (static_cast<double>(row) - win / 2.0) * cfg.sweep_rate_hz() / win;
}

}  // namespace twrmcae::pre
