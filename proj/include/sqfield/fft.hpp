#pragma once

#include <fftw3.h>

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <span>

namespace sqfield::fft {

// Thin RAII layer over FFTW for square n x n real <-> half-complex
// transforms. Plans are created once per size under a global lock (FFTW's
// planner is not thread-safe) with FFTW_ESTIMATE so that the chosen
// algorithm, and therefore every rounding, is reproducible run to run.
// Execution goes through the new-array interface on per-thread buffers.

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

template <class T>
using FftwBuffer = std::unique_ptr<T[], FftwDeleter>;

inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class PlanPair {
 public:
  explicit PlanPair(int n) : n_(n) {
    FftwBuffer<double> real(static_cast<double*>(fftw_malloc(sizeof(double) * n * n)));
    FftwBuffer<fftw_complex> spec(
        static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n * (n / 2 + 1))));
    std::lock_guard lock(planner_mutex());
    forward_ = fftw_plan_dft_r2c_2d(n, n, real.get(), spec.get(), FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r_2d(n, n, spec.get(), real.get(), FFTW_ESTIMATE);
  }
  ~PlanPair() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }
  PlanPair(const PlanPair&) = delete;
  PlanPair& operator=(const PlanPair&) = delete;

  int n() const { return n_; }
  fftw_plan forward() const { return forward_; }
  fftw_plan backward() const { return backward_; }

 private:
  int n_;
  fftw_plan forward_;
  fftw_plan backward_;
};

inline const PlanPair& plans(int n) {
  static std::mutex cache_mutex;
  static std::map<int, std::unique_ptr<PlanPair>> cache;
  std::lock_guard lock(cache_mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<PlanPair>(n);
  return *slot;
}

/// Per-thread scratch for one grid size: real n*n array and half spectrum n*(n/2+1).
class Workspace {
 public:
  explicit Workspace(int n)
      : n_(n),
        real_(static_cast<double*>(fftw_malloc(sizeof(double) * n * n))),
        spec_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n * (n / 2 + 1)))),
        plans_(&plans(n)) {}

  int n() const { return n_; }
  int half() const { return n_ / 2 + 1; }
  std::span<double> real() { return {real_.get(), static_cast<std::size_t>(n_) * n_}; }
  std::span<std::complex<double>> spectrum() {
    return {reinterpret_cast<std::complex<double>*>(spec_.get()),
            static_cast<std::size_t>(n_) * half()};
  }

  void forward() { fftw_execute_dft_r2c(plans_->forward(), real_.get(), spec_.get()); }
  void backward() { fftw_execute_dft_c2r(plans_->backward(), spec_.get(), real_.get()); }

 private:
  int n_;
  FftwBuffer<double> real_;
  FftwBuffer<fftw_complex> spec_;
  const PlanPair* plans_;
};

inline Workspace& thread_workspace(int n) {
  thread_local std::map<int, std::unique_ptr<Workspace>> pool;
  auto& slot = pool[n];
  if (!slot) slot = std::make_unique<Workspace>(n);
  return *slot;
}

}  // namespace sqfield::fft
