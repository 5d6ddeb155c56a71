#pragma once

#include <span>

#include "twrmcae/tensor.hpp"

namespace twrmcae::fft {

/// In-place unnormalized forward DFT: X[k] = sum_n x[n] e^{-j 2 pi k n / L}.
void forward(std::span<cdouble> data);
/// In-place inverse DFT with the 1/L factor applied.
void inverse(std::span<cdouble> data);

}  // namespace twrmcae::fft
