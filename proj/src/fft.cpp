#include "fiberlab/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <utility>

namespace fiberlab {

namespace {

struct FftwFree {
  void operator()(void* p) const noexcept { fftw_free(p); }
};
using Buffer = std::unique_ptr<fftw_complex[], FftwFree>;

Buffer make_buffer(Eigen::Index n) {
  return Buffer(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * static_cast<std::size_t>(n))));
}

// The planner is not reentrant, so plans are built under a lock and cached.
// Execution through fftw_execute_dft on aligned buffers is thread safe
// and always runs the same codelets, which keeps results reproducible.
class PlanCache {
public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(Eigen::Index n, int sign) {
    std::lock_guard lock(mutex_);
    const auto key = std::make_pair(n, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    Buffer in = make_buffer(n), out = make_buffer(n);
    fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n), in.get(), out.get(), sign, FFTW_ESTIMATE);
    plans_.emplace(key, plan);
    return plan;
  }

private:
  std::mutex mutex_;
  std::map<std::pair<Eigen::Index, int>, fftw_plan> plans_;
};

PlanCache& plans() {
  static PlanCache cache;
  return cache;
}

void transform(const Eigen::VectorXcd& in, Eigen::VectorXcd& out, int sign) {
  const Eigen::Index n = in.size();
  out.resize(n);
  if (n == 0) return;
  const fftw_plan plan = plans().get(n, sign);
  // per-thread scratch, reused while the size stays the same
  thread_local Eigen::Index scratch_n = 0;
  thread_local Buffer a, b;
  if (scratch_n != n) {
    a = make_buffer(n);
    b = make_buffer(n);
    scratch_n = n;
  }
  const auto bytes = sizeof(fftw_complex) * static_cast<std::size_t>(n);
  std::memcpy(a.get(), in.data(), bytes);
  fftw_execute_dft(plan, a.get(), b.get());
  std::memcpy(static_cast<void*>(out.data()), b.get(), bytes);
}

}  // namespace

void fft_forward(const Eigen::VectorXcd& in, Eigen::VectorXcd& out) { transform(in, out, FFTW_FORWARD); }

void fft_inverse(const Eigen::VectorXcd& in, Eigen::VectorXcd& out) {
  transform(in, out, FFTW_BACKWARD);
  if (out.size() > 0) out /= static_cast<double>(out.size());
}

Eigen::VectorXd fft_angular_frequencies(Eigen::Index n, double dt) {
  Eigen::VectorXd w(n);
  const double dw = 2.0 * std::numbers::pi / (static_cast<double>(n) * dt);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index signed_k = (k <= (n - 1) / 2) ? k : k - n;
    w[k] = dw * static_cast<double>(signed_k);
  }
  return w;
}

}  // namespace fiberlab
