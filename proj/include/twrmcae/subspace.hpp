#pragma once

#include <optional>
#include <vector>

#include <json.hpp>

#include "twrmcae/tensor.hpp"

namespace twrmcae::subspace {

struct Svd {
  CMatrix U;                   // rows x r, orthonormal columns
  Eigen::VectorXd sigma;       // r, descending, non-negative
  CMatrix V;                   // cols x r, orthonormal columns
};

/// Thin SVD m = U diag(sigma) V^H with r = min(rows, cols).
Svd svd_full(const CMatrix& m);

struct SeparationParams {
  double alpha = 1.0;                   // wall threshold multiplier
  std::optional<std::size_t> max_rank;  // components beyond this go to noise
};

/// Wall threshold mean(sigma) - alpha * std(sigma) (population std).
double wall_threshold(std::span<const double> sigma, double alpha);

/// AIC(i) for split i (1-based signal count) over `sigma` (descending),
/// evaluated literally with sigma^2 as eigenvalue proxies.
double aic_value(std::span<const double> sigma, std::size_t i, double n_obs);
/// argmin_i AIC(i) over i in [1, M-1]; ties resolve to the smallest i; an
/// exactly flat spectrum returns M-1.
std::size_t aic_noise_index(std::span<const double> sigma, double n_obs);

struct SubspaceTriple {
  CMatrix target;
  CMatrix wall;
  CMatrix noise;
};

/// Diagnostics of one separation run.
struct SeparationReport {
  std::vector<double> sigma;
  double sigma_d = 0.0;
  std::size_t rank = 0;       // numerical rank; components past it are noise
  std::size_t aic_index = 0;  // signal count among non-wall components
  std::vector<std::size_t> wall_indices, target_indices, noise_indices;
  nlohmann::json to_json() const;
};

/// Wall: sigma >= sigma_d; then AIC on the remaining values splits target
/// from noise. Both statistics only see the numerical rank
/// (sigma > max(rows, cols) * eps * sigma_1); the null space is noise.
SubspaceTriple svd_separate(const CMatrix& m, const SeparationParams& p, double n_obs,
                            SeparationReport* report = nullptr);
/// Same, with n_obs = number of rows of m.
SubspaceTriple svd_separate(const CMatrix& m, const SeparationParams& p = {},
                            SeparationReport* report = nullptr);

}  // namespace twrmcae::subspace
