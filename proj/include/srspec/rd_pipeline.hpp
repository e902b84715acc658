#pragma once

// ADC cube -> range-Doppler-channel cube -> per-bin beam vectors ->
// range-Doppler-azimuth magnitudes -> Doppler-averaged range-azimuth map.
//
// FFT convention: unnormalized forward transform over fast time (-> range) and
// slow time (-> Doppler), X[r, d] = sum_{f, w} x[f, w] exp(-j2pi(r f / N_fast + d w / N_slow)),
// applied per channel after the optional per-axis window. A constant input of
// one therefore yields N_fast * N_slow at bin (0, 0).

#include "srspec/array_model.hpp"
#include "srspec/fft.hpp"
#include "srspec/iaa.hpp"
#include "srspec/scene_sim.hpp"

#include <concepts>
#include <numbers>

namespace srspec {

enum class WindowKind { rectangular, hann };

inline std::string to_string(WindowKind w) { return w == WindowKind::hann ? "hann" : "rectangular"; }

inline WindowKind window_from_string(const std::string& s) {
  if (s == "rectangular" || s == "rect") return WindowKind::rectangular;
  if (s == "hann") return WindowKind::hann;
  throw ValidationError("unknown window '" + s + "' (expected rectangular or hann)");
}

inline std::vector<double> make_window(WindowKind kind, std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (kind == WindowKind::hann && n > 1)
    for (std::size_t i = 0; i < n; ++i)
      w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1)));
  return w;
}

/// N_range x N_doppler x N_ch, channel innermost.
struct RdcCube {
  Tensor3<cplx> data;
  std::size_t n_range() const { return data.d0; }
  std::size_t n_doppler() const { return data.d1; }
  std::size_t n_ch() const { return data.d2; }
};

/// N_range x N_doppler x L spectrum magnitudes.
struct RdaCube {
  Tensor3<double> data;
  std::size_t n_range() const { return data.d0; }
  std::size_t n_doppler() const { return data.d1; }
  std::size_t l() const { return data.d2; }
};

/// Range (rows) x azimuth grid (columns).
struct RaMap {
  RMatrix data;
  bool normalized = false;
  bool all_zero = false;
};

inline RdcCube adc_to_rdc(const AdcCube& cube, std::size_t range_trunc, WindowKind window = WindowKind::rectangular) {
  const std::size_t nf = cube.n_fast(), ns = cube.n_slow(), nc = cube.n_ch();
  if (range_trunc == 0 || range_trunc > nf)
    throw ValidationError("adc_to_rdc: range_trunc " + std::to_string(range_trunc) + " outside [1, " +
                          std::to_string(nf) + "]");
  Tensor3<cplx> work = cube.data;
  if (window != WindowKind::rectangular) {
    const auto wf = make_window(window, nf);
    const auto ws = make_window(window, ns);
    for (std::size_t f = 0; f < nf; ++f)
      for (std::size_t w = 0; w < ns; ++w) {
        cplx* fiber = work.fiber(f, w);
        for (std::size_t c = 0; c < nc; ++c) fiber[c] *= wf[f] * ws[w];
      }
  }
  fft::forward_2d_interleaved(work.data.data(), static_cast<int>(nf), static_cast<int>(ns), static_cast<int>(nc));
  work.data.resize(range_trunc * ns * nc);
  work.d0 = range_trunc;
  return RdcCube{std::move(work)};
}

inline BeamVector extract_beam_vector(const RdcCube& rdc, std::size_t range_idx, std::size_t doppler_idx) {
  if (range_idx >= rdc.n_range() || doppler_idx >= rdc.n_doppler())
    throw std::out_of_range("extract_beam_vector: bin (" + std::to_string(range_idx) + ", " +
                            std::to_string(doppler_idx) + ") outside " + std::to_string(rdc.n_range()) + " x " +
                            std::to_string(rdc.n_doppler()));
  return Eigen::Map<const CVector>(rdc.data.fiber(range_idx, doppler_idx), static_cast<Eigen::Index>(rdc.n_ch()));
}

/// Anything that maps one beam vector to L nonnegative spectrum magnitudes.
/// Implementations must be safe to call concurrently through a const reference.
template <typename E>
concept SpectrumEstimator = requires(const E& e, const BeamVector& y) {
  { e.grid_size() } -> std::convertible_to<std::size_t>;
  { e.magnitude(y) } -> std::convertible_to<RVector>;
};

/// Optional fast path: columns of `beams` in, columns of magnitudes out.
template <typename E>
concept BatchSpectrumEstimator = SpectrumEstimator<E> && requires(const E& e, const CMatrix& beams) {
  { e.magnitude_batch(beams) } -> std::convertible_to<RMatrix>;
};

class DbfEstimator {
 public:
  explicit DbfEstimator(const SteeringMatrix& a) : a_(&a) {}
  std::size_t grid_size() const { return a_->l(); }
  RVector magnitude(const BeamVector& y) const { return dbf_spectrum(*a_, y).cwiseAbs(); }
  RMatrix magnitude_batch(const CMatrix& beams) const {
    return ((a_->entries.adjoint() * beams) / static_cast<double>(a_->n_ch())).cwiseAbs();
  }

 private:
  const SteeringMatrix* a_;
};

class IaaEstimator {
 public:
  IaaEstimator(const SteeringMatrix& a, IaaConfig cfg) : a_(&a), cfg_(cfg) {}
  std::size_t grid_size() const { return a_->l(); }
  RVector magnitude(const BeamVector& y) const { return iaa_spectrum(*a_, y, cfg_).coeffs.cwiseAbs(); }

 private:
  const SteeringMatrix* a_;
  IaaConfig cfg_;
};

template <SpectrumEstimator E>
RdaCube assemble_rda(const RdcCube& rdc, const E& estimator, unsigned workers = 1) {
  const std::size_t nr = rdc.n_range(), nd = rdc.n_doppler(), nc = rdc.n_ch();
  const std::size_t l = estimator.grid_size();
  RdaCube out{Tensor3<double>(nr, nd, l)};

  auto store = [&](std::size_t r, std::size_t d, const auto& mag) {
    if (static_cast<std::size_t>(mag.size()) != l)
      throw DataError("estimator returned " + std::to_string(mag.size()) + " values, expected " + std::to_string(l));
    double* dst = out.data.fiber(r, d);
    for (std::size_t k = 0; k < l; ++k) dst[k] = mag[static_cast<Eigen::Index>(k)];
  };

  if constexpr (BatchSpectrumEstimator<E>) {
    // One batch per range row; the batch shape never depends on `workers`.
    parallel_for(nr, workers, [&](std::size_t r) {
      try {
        CMatrix beams(static_cast<Eigen::Index>(nc), static_cast<Eigen::Index>(nd));
        for (std::size_t d = 0; d < nd; ++d)
          beams.col(static_cast<Eigen::Index>(d)) =
              Eigen::Map<const CVector>(rdc.data.fiber(r, d), static_cast<Eigen::Index>(nc));
        const RMatrix mags = estimator.magnitude_batch(beams);
        if (static_cast<std::size_t>(mags.cols()) != nd)
          throw DataError("batch estimator returned wrong column count");
        for (std::size_t d = 0; d < nd; ++d) store(r, d, mags.col(static_cast<Eigen::Index>(d)));
      } catch (const std::exception& e) {
        throw DataError("estimator failed at range row " + std::to_string(r) + ": " + e.what());
      }
    });
  } else {
    parallel_for(nr * nd, workers, [&](std::size_t i) {
      const std::size_t r = i / nd, d = i % nd;
      try {
        store(r, d, estimator.magnitude(extract_beam_vector(rdc, r, d)));
      } catch (const std::exception& e) {
        throw DataError("estimator failed at bin (" + std::to_string(r) + ", " + std::to_string(d) + "): " + e.what());
      }
    });
  }
  return out;
}

inline RaMap rda_to_ra(const RdaCube& rda, bool normalize) {
  const std::size_t nr = rda.n_range(), nd = rda.n_doppler(), l = rda.l();
  RaMap map;
  map.data = RMatrix::Zero(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(l));
  for (std::size_t r = 0; r < nr; ++r)
    for (std::size_t d = 0; d < nd; ++d) {
      const double* src = rda.data.fiber(r, d);
      for (std::size_t k = 0; k < l; ++k) map.data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) += src[k];
    }
  if (nd > 0) map.data /= static_cast<double>(nd);
  const double peak = map.data.size() > 0 ? map.data.maxCoeff() : 0.0;
  map.all_zero = !(peak > 0.0);
  if (normalize) {
    if (!map.all_zero) map.data /= peak;
    map.normalized = true;
  }
  return map;
}

/// Scales a map to [0, 1] by its global max; all-zero maps are left as is.
inline RaMap normalize_map(RaMap map) {
  const double peak = map.data.size() > 0 ? map.data.maxCoeff() : 0.0;
  map.all_zero = !(peak > 0.0);
  if (!map.all_zero) map.data /= peak;
  map.normalized = true;
  return map;
}

}  // namespace srspec
