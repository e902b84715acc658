#pragma once

// Array geometry, the uniform-in-sine angular grid, steering vectors and
// conventional beamforming (DBF).
//
// Element n of a steering vector is exp(j 2 pi d_n sin(theta)) with d_n the
// element position in wavelengths. The grid is sin(theta_k) = -1 + 2k/L, so for
// a half-wavelength ULA the DBF spectrum is a zero-padded length-L FFT.

#include "srspec/core.hpp"
#include "srspec/fft.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>
#include <string>

namespace srspec {

class ArrayGeometry {
 public:
  /// Arbitrary linear array; spacings are element positions in wavelengths.
  explicit ArrayGeometry(std::vector<double> spacings) : spacings_(std::move(spacings)) {
    if (spacings_.empty()) throw ValidationError("array geometry needs at least one element");
    if (spacings_.front() != 0.0) throw ValidationError("reference element spacing must be 0");
    for (std::size_t n = 1; n < spacings_.size(); ++n)
      if (!(spacings_[n] > spacings_[n - 1]))
        throw ValidationError("element spacings must be strictly increasing");
  }

  /// Half-wavelength uniform linear array.
  static ArrayGeometry ula(std::size_t n_ch) {
    if (n_ch == 0) throw ValidationError("ULA needs at least one element");
    std::vector<double> s(n_ch);
    for (std::size_t n = 0; n < n_ch; ++n) s[n] = 0.5 * static_cast<double>(n);
    return ArrayGeometry(std::move(s));
  }

  std::size_t n_ch() const { return spacings_.size(); }
  const std::vector<double>& spacings() const { return spacings_; }

  bool is_half_wavelength_ula() const {
    for (std::size_t n = 0; n < spacings_.size(); ++n)
      if (spacings_[n] != 0.5 * static_cast<double>(n)) return false;
    return true;
  }

  /// Equally spaced elements (any pitch); the fictitious covariance is then Toeplitz.
  bool is_uniform() const {
    if (spacings_.size() < 2) return true;
    const double pitch = spacings_[1];
    for (std::size_t n = 0; n < spacings_.size(); ++n)
      if (spacings_[n] != pitch * static_cast<double>(n)) return false;
    return true;
  }

  /// Short stable identifier used in file headers to refuse mixing geometries.
  std::string id() const {
    if (is_half_wavelength_ula()) return "ula" + std::to_string(n_ch());
    std::uint64_t h = 1469598103934665603ULL;
    for (double d : spacings_) {
      std::uint64_t bits;
      std::memcpy(&bits, &d, sizeof bits);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xFF;
        h *= 1099511628211ULL;
      }
    }
    char buf[48];
    std::snprintf(buf, sizeof buf, "custom%zu-%016llx", n_ch(), static_cast<unsigned long long>(h));
    return buf;
  }

  friend bool operator==(const ArrayGeometry&, const ArrayGeometry&) = default;

 private:
  std::vector<double> spacings_;
};

class AngularGrid {
 public:
  explicit AngularGrid(std::size_t l) : sin_(l), theta_deg_(l) {
    if (l == 0) throw ValidationError("angular grid size must be positive");
    for (std::size_t k = 0; k < l; ++k) {
      sin_[k] = -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(l);
      theta_deg_[k] = std::asin(sin_[k]) * 180.0 / std::numbers::pi;
    }
  }

  std::size_t size() const { return sin_.size(); }
  const std::vector<double>& sin_values() const { return sin_; }
  const std::vector<double>& theta_values() const { return theta_deg_; }
  double spacing() const { return 2.0 / static_cast<double>(sin_.size()); }

  /// Grid index closest to sin(theta), treating the sine axis as periodic over
  /// [-1, 1) (the half-wavelength ULA response is).
  std::size_t nearest_index(double sin_theta) const {
    const double l = static_cast<double>(sin_.size());
    const double pos = std::round((sin_theta + 1.0) * l / 2.0);
    const auto idx = static_cast<long long>(pos) % static_cast<long long>(sin_.size());
    return static_cast<std::size_t>(idx < 0 ? idx + static_cast<long long>(sin_.size()) : idx);
  }

 private:
  std::vector<double> sin_;
  std::vector<double> theta_deg_;
};

/// Circular distance between two grid indices.
inline std::size_t grid_distance(std::size_t a, std::size_t b, std::size_t l) {
  const std::size_t d = a > b ? a - b : b - a;
  return std::min(d, l - d);
}

inline CVector steering_vector(const ArrayGeometry& geom, double sin_theta) {
  if (!(std::abs(sin_theta) <= 1.0)) throw std::domain_error("steering_vector: |sin(theta)| must be <= 1");
  CVector a(static_cast<Eigen::Index>(geom.n_ch()));
  const auto& d = geom.spacings();
  for (std::size_t n = 0; n < d.size(); ++n) {
    const double phase = 2.0 * std::numbers::pi * d[n] * sin_theta;
    a[static_cast<Eigen::Index>(n)] = n == 0 ? cplx(1.0, 0.0) : std::polar(1.0, phase);
  }
  return a;
}

/// Array manifold sampled on the grid: column k is a(theta_k).
struct SteeringMatrix {
  ArrayGeometry geometry;
  AngularGrid grid;
  CMatrix entries;

  SteeringMatrix(ArrayGeometry g, AngularGrid gr)
      : geometry(std::move(g)), grid(std::move(gr)),
        entries(static_cast<Eigen::Index>(geometry.n_ch()), static_cast<Eigen::Index>(grid.size())) {
    for (std::size_t k = 0; k < grid.size(); ++k)
      entries.col(static_cast<Eigen::Index>(k)) = steering_vector(geometry, grid.sin_values()[k]);
  }

  std::size_t n_ch() const { return geometry.n_ch(); }
  std::size_t l() const { return grid.size(); }
};

inline SteeringMatrix build_steering_matrix(const ArrayGeometry& geom, const AngularGrid& grid) {
  return SteeringMatrix(geom, grid);
}

/// Conventional beamformer, (1/N_ch) A^H y, by explicit matrix product.
inline CVector dbf_spectrum(const SteeringMatrix& a, const BeamVector& y) {
  if (static_cast<std::size_t>(y.size()) != a.n_ch())
    throw ValidationError("dbf_spectrum: beam vector has " + std::to_string(y.size()) +
                          " elements, steering matrix expects " + std::to_string(a.n_ch()));
  CVector out = a.entries.adjoint() * y;
  out /= static_cast<double>(a.n_ch());
  return out;
}

/// Same spectrum through a length-L FFT. Only valid for the half-wavelength
/// ULA on the uniform-in-sine grid, where
///   (1/N) a(theta_k)^H y = (1/N) FFT_L{ y_n (-1)^n }[k],
/// with elements beyond L folded modulo L.
inline CVector dbf_spectrum_fft(const SteeringMatrix& a, const BeamVector& y) {
  if (!a.geometry.is_half_wavelength_ula())
    throw ValidationError("dbf_spectrum_fft requires a half-wavelength ULA");
  if (static_cast<std::size_t>(y.size()) != a.n_ch())
    throw ValidationError("dbf_spectrum_fft: dimension mismatch");
  const std::size_t l = a.l();
  CVector buf = CVector::Zero(static_cast<Eigen::Index>(l));
  for (Eigen::Index n = 0; n < y.size(); ++n)
    buf[static_cast<Eigen::Index>(static_cast<std::size_t>(n) % l)] += (n % 2 == 0) ? y[n] : -y[n];
  fft::forward(std::span<cplx>(buf.data(), l));
  buf /= static_cast<double>(a.n_ch());
  return buf;
}

}  // namespace srspec
