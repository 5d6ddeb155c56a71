#include "twrmcae/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <utility>
#include <vector>

namespace twrmcae::fft {

namespace {

// Plans are created once per (length, direction) and reused through the
// thread-safe new-array execute interface. FFTW_UNALIGNED keeps the chosen
// codelets independent of buffer alignment, so results are reproducible.
class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(int n, int sign) {
    std::lock_guard lock(mu_);
    auto it = plans_.find({n, sign});
    if (it != plans_.end()) return it->second;
    std::vector<fftw_complex> scratch(static_cast<std::size_t>(n));
    fftw_plan p = fftw_plan_dft_1d(n, scratch.data(), scratch.data(), sign,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_.emplace(std::make_pair(n, sign), p);
    return p;
  }

 private:
  std::mutex mu_;
  std::map<std::pair<int, int>, fftw_plan> plans_;
};

PlanCache& cache() {
  static PlanCache c;
  return c;
}

void run(std::span<cdouble> data, int sign) {
  if (data.empty()) return;
  const int n = static_cast<int>(data.size());
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(cache().get(n, sign), buf, buf);
}

}  // namespace

void forward(std::span<cdouble> data) { run(data, FFTW_FORWARD); }

void inverse(std::span<cdouble> data) {
  run(data, FFTW_BACKWARD);
  const double s = 1.0 / static_cast<double>(data.size());
  for (auto& v : data) v *= s;
}

}  // namespace twrmcae::fft
