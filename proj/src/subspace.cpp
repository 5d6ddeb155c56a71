#include "twrmcae/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/SVD>

#include "twrmcae/error.hpp"

namespace twrmcae::subspace {

Svd svd_full(const CMatrix& m) {
  if (m.size() == 0) throw ShapeError("svd of an empty matrix");
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) {
    throw NumericError("svd did not converge for " + std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()) + " matrix");
  }
  return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

double wall_threshold(std::span<const double> sigma, double alpha) {
  if (sigma.size() < 2) throw ValueError("wall threshold needs at least 2 singular values");
  const double n = static_cast<double>(sigma.size());
  const double mean = std::accumulate(sigma.begin(), sigma.end(), 0.0) / n;
  double var = 0.0;
  for (double s : sigma) var += (s - mean) * (s - mean);
  return mean - alpha * std::sqrt(var / n);
}

double aic_value(std::span<const double> sigma, std::size_t i, double n_obs) {
  const std::size_t M = sigma.size();
  const std::size_t tail = M - i;
  double sum = 0.0, log_prod = 0.0;
  for (std::size_t m = i; m < M; ++m) {
    const double ev = std::max(sigma[m] * sigma[m], 1e-300);
    sum += ev;
    log_prod += std::log(ev);
  }
  const double mean = sum / static_cast<double>(tail);
  const double log_ratio = static_cast<double>(tail) * std::log(mean) - log_prod;
  const double penalty =
      0.5 * static_cast<double>(2 * M - i) * static_cast<double>(i) * std::log(n_obs);
  return n_obs * log_ratio + penalty;
}

std::size_t aic_noise_index(std::span<const double> sigma, double n_obs) {
  const std::size_t M = sigma.size();
  if (M < 2) throw ValueError("AIC needs at least 2 singular values");
  if (!(n_obs >= 2)) throw ValueError("AIC needs at least 2 observations");
  if (std::all_of(sigma.begin(), sigma.end(), [&](double s) { return s == sigma[0]; })) return M - 1;
  std::size_t best = 1;
  double best_val = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < M; ++i) {
    const double v = aic_value(sigma, i, n_obs);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  return best;
}

nlohmann::json SeparationReport::to_json() const {
  return {{"sigma", sigma},          {"sigma_d", sigma_d},           {"aic_index", aic_index}, {"rank", rank},
          {"wall", wall_indices},    {"target", target_indices},     {"noise", noise_indices}};
}

namespace {

CMatrix accumulate(const Svd& s, const std::vector<std::size_t>& idx, Eigen::Index rows,
                   Eigen::Index cols) {
  CMatrix out = CMatrix::Zero(rows, cols);
  for (std::size_t i : idx) {
    const auto k = static_cast<Eigen::Index>(i);
    out.noalias() += s.sigma(k) * s.U.col(k) * s.V.col(k).adjoint();
  }
  return out;
}

}  // namespace

SubspaceTriple svd_separate(const CMatrix& m, const SeparationParams& p, double n_obs,
                            SeparationReport* report) {
  if (!(p.alpha > 0)) throw ValueError("alpha must be > 0");
  const Svd s = svd_full(m);
  const auto r = static_cast<std::size_t>(s.sigma.size());
  std::vector<double> sigma(s.sigma.data(), s.sigma.data() + r);

  SeparationReport rep;
  rep.sigma = sigma;
  if (m.isZero(0.0)) {
    // Nothing to separate; every component is an exact zero.
    rep.noise_indices.resize(r);
    std::iota(rep.noise_indices.begin(), rep.noise_indices.end(), 0);
  } else {
    // Components inside the numerical null space carry no signal; they go to
    // noise and stay out of both statistics.
    const double tol = static_cast<double>(std::max(m.rows(), m.cols())) *
                       std::numeric_limits<double>::epsilon() * sigma[0];
    rep.rank = static_cast<std::size_t>(std::count_if(sigma.begin(), sigma.end(), [&](double v) { return v > tol; }));
    const std::span<const double> live(sigma.data(), rep.rank);
    rep.sigma_d = rep.rank >= 2 ? wall_threshold(live, p.alpha) : sigma[0];
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < rep.rank; ++i) {
      if (sigma[i] >= rep.sigma_d)
        rep.wall_indices.push_back(i);
      else
        rest.push_back(i);
    }
    if (rest.size() >= 2) {
      std::vector<double> tail(rest.size());
      for (std::size_t j = 0; j < rest.size(); ++j) tail[j] = sigma[rest[j]];
      rep.aic_index = aic_noise_index(tail, n_obs);
    } else {
      rep.aic_index = rest.size();
    }
    for (std::size_t j = 0; j < rest.size(); ++j) {
      const bool beyond_cap = p.max_rank && rest[j] >= *p.max_rank;
      (j < rep.aic_index && !beyond_cap ? rep.target_indices : rep.noise_indices).push_back(rest[j]);
    }
    for (std::size_t i = rep.rank; i < r; ++i) rep.noise_indices.push_back(i);
  }

  SubspaceTriple out{accumulate(s, rep.target_indices, m.rows(), m.cols()),
                     accumulate(s, rep.wall_indices, m.rows(), m.cols()),
                     accumulate(s, rep.noise_indices, m.rows(), m.cols())};
  if (report) *report = std::move(rep);
  return out;
}

SubspaceTriple svd_separate(const CMatrix& m, const SeparationParams& p, SeparationReport* report) {
  return svd_separate(m, p, static_cast<double>(m.rows()), report);
}

}  // namespace twrmcae::subspace
