#pragma once

// Thin FFTW front end. Conventions used throughout the toolkit:
//   forward transform X[k] = sum_n x[n] exp(-j 2 pi n k / N), unnormalized.
// Plans are created with FFTW_ESTIMATE so the same input always produces the
// same bits, and are cached per shape behind a mutex (FFTW's planner is not
// thread safe; executing an existing plan on new arrays is).

#include "srspec/core.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <span>
#include <tuple>

namespace srspec::fft {

namespace detail {

struct PlanKey {
  int rank, n0, n1, howmany, stride;
  auto operator<=>(const PlanKey&) const = default;
};

class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(const PlanKey& key) {
    std::lock_guard lock(mutex_);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    const std::size_t count = static_cast<std::size_t>(key.n0) * key.n1 * key.howmany;
    auto* scratch = fftw_alloc_complex(count);
    int dims[2] = {key.n0, key.n1};
    fftw_plan plan = fftw_plan_many_dft(key.rank, dims, key.howmany, scratch, nullptr, key.stride, 1,
                                        scratch, nullptr, key.stride, 1, FFTW_FORWARD,
                                        FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(scratch);
    if (plan == nullptr) throw DataError("FFTW failed to create a plan");
    plans_.emplace(key, plan);
    return plan;
  }

  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  PlanCache() = default;
  std::mutex mutex_;
  std::map<PlanKey, fftw_plan> plans_;
};

inline fftw_complex* as_fftw(cplx* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace detail

/// In-place forward FFT of a contiguous sequence.
inline void forward(std::span<cplx> data) {
  if (data.empty()) return;
  const int n = static_cast<int>(data.size());
  fftw_plan plan = detail::PlanCache::instance().get({1, n, 1, 1, 1});
  fftw_execute_dft(plan, detail::as_fftw(data.data()), detail::as_fftw(data.data()));
}

/// In-place forward 2D FFT over the two outer axes of an (n0 x n1 x howmany)
/// C-order tensor, independently for each innermost index.
inline void forward_2d_interleaved(cplx* data, int n0, int n1, int howmany) {
  if (n0 <= 0 || n1 <= 0 || howmany <= 0) return;
  fftw_plan plan = detail::PlanCache::instance().get({2, n0, n1, howmany, howmany});
  fftw_execute_dft(plan, detail::as_fftw(data), detail::as_fftw(data));
}

}  // namespace srspec::fft
