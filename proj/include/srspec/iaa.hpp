#pragma once

// Single-snapshot Iterative Adaptive Approach.
//
// Starting from the DBF periodogram P_l = |a_l^H y / N|^2, each iteration
// builds the fictitious covariance R = A diag(P) A^H (+ diagonal loading),
// factors R = L L^H once, and evaluates the weighted least-squares minimizer
//   s_l = a_l^H R^{-1} y / (a_l^H R^{-1} a_l)
// as (L^{-1} a_l)^H (L^{-1} y) / ||L^{-1} a_l||^2 for every grid angle.
//
// For uniform arrays R is Hermitian Toeplitz, R[m, n] = r[m - n] with
// r[d] = sum_l P_l a_l[d], so only its first column is accumulated (in long
// double; P spans many decades once the iteration sharpens).

#include "srspec/array_model.hpp"
#include "srspec/latency.hpp"

#include "json.hpp"

#include <Eigen/Cholesky>

#include <limits>
#include <optional>

namespace srspec {

struct IaaConfig {
  int max_iters = 15;
  double rel_tol = 1e-4;
  double loading = 1e-6;  // relative to trace(R) / N_ch

  void validate() const {
    if (max_iters < 1) throw ValidationError("IAA max_iters must be >= 1");
    if (!(rel_tol >= 0.0)) throw ValidationError("IAA rel_tol must be >= 0");
    if (!(loading >= 0.0)) throw ValidationError("IAA loading must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const IaaConfig& c) {
  j = {{"max_iters", c.max_iters}, {"rel_tol", c.rel_tol}, {"loading", c.loading}};
}
inline void from_json(const nlohmann::json& j, IaaConfig& c) {
  IaaConfig d;
  c.max_iters = j.value("max_iters", d.max_iters);
  c.rel_tol = j.value("rel_tol", d.rel_tol);
  c.loading = j.value("loading", d.loading);
}

struct IaaResult {
  CVector coeffs;  // reflection coefficient per grid angle
  RVector power;   // |coeffs|^2
  int iters_used = 0;
  bool converged = false;
};

inline IaaResult iaa_spectrum(const SteeringMatrix& a, const BeamVector& y, const IaaConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<Eigen::Index>(a.n_ch());
  const auto l = static_cast<Eigen::Index>(a.l());
  if (y.size() != n)
    throw ValidationError("iaa_spectrum: beam vector has " + std::to_string(y.size()) + " elements, expected " +
                          std::to_string(n));
  if (!y.allFinite()) throw ValidationError("iaa_spectrum: beam vector contains non-finite values");

  IaaResult out;
  if ((y.array() == cplx(0.0, 0.0)).all()) {
    out.coeffs = CVector::Zero(l);
    out.power = RVector::Zero(l);
    out.iters_used = 1;
    out.converged = true;
    return out;
  }

  const CMatrix& steer = a.entries;
  CVector s = dbf_spectrum(a, y);
  RVector p = s.cwiseAbs2();

  const bool toeplitz = a.geometry.is_uniform();
  CMatrix weighted;
  CMatrix r(n, n);
  CMatrix g(n, l);
  CVector h(n);
  Eigen::LLT<CMatrix> llt(n);

  for (int it = 1; it <= cfg.max_iters; ++it) {
    if (toeplitz) {
      for (Eigen::Index d = 0; d < n; ++d) {
        long double re = 0.0L, im = 0.0L;
        for (Eigen::Index k = 0; k < l; ++k) {
          re += static_cast<long double>(p[k]) * steer(d, k).real();
          im += static_cast<long double>(p[k]) * steer(d, k).imag();
        }
        const cplx v(static_cast<double>(re), static_cast<double>(im));
        for (Eigen::Index m = d; m < n; ++m) {
          r(m, m - d) = v;
          r(m - d, m) = std::conj(v);
        }
      }
      for (Eigen::Index m = 0; m < n; ++m) r(m, m).imag(0.0);
    } else {
      weighted = steer * p.cast<cplx>().asDiagonal();
      r.noalias() = weighted * steer.adjoint();
    }
    const double load = cfg.loading * r.trace().real() / static_cast<double>(n);
    r.diagonal().array() += load;

    llt.compute(r);
    if (llt.info() != Eigen::Success) {
      throw DataError(cfg.loading > 0.0
                          ? "iaa_spectrum: covariance factorization failed"
                          : "iaa_spectrum: covariance is singular; use diagonal loading > 0");
    }
    g = steer;
    llt.matrixL().solveInPlace(g);
    h = y;
    llt.matrixL().solveInPlace(h);

    const CVector num = g.adjoint() * h;
    const RVector den = g.colwise().squaredNorm().transpose();
    for (Eigen::Index k = 0; k < l; ++k) s[k] = num[k] / den[k];
    if (!s.allFinite())
      throw DataError(cfg.loading > 0.0 ? "iaa_spectrum: non-finite coefficients"
                                        : "iaa_spectrum: non-finite coefficients; use diagonal loading > 0");

    RVector p_new = s.cwiseAbs2();
    const double change =
        (p_new - p).cwiseAbs().maxCoeff() / (p.maxCoeff() + std::numeric_limits<double>::epsilon());
    p = std::move(p_new);
    out.iters_used = it;
    if (change < cfg.rel_tol) {
      out.converged = true;
      break;
    }
  }
  out.coeffs = std::move(s);
  out.power = std::move(p);
  return out;
}

struct IaaBatchResult {
  std::vector<IaaResult> results;  // failed items hold empty vectors
  std::vector<std::pair<std::size_t, std::string>> errors;
};

/// Order-preserving batch over `workers` threads; failures are collected, not thrown.
inline IaaBatchResult iaa_batch(const SteeringMatrix& a, const std::vector<BeamVector>& vectors,
                                const IaaConfig& cfg, unsigned workers = 1) {
  cfg.validate();
  IaaBatchResult out;
  out.results.resize(vectors.size());
  std::vector<std::optional<std::string>> err(vectors.size());
  parallel_for(vectors.size(), workers, [&](std::size_t i) {
    try {
      out.results[i] = iaa_spectrum(a, vectors[i], cfg);
    } catch (const std::exception& e) {
      err[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < err.size(); ++i)
    if (err[i]) out.errors.emplace_back(i, *err[i]);
  return out;
}

inline LatencyReport time_iaa(const SteeringMatrix& a, const std::vector<BeamVector>& vectors, const IaaConfig& cfg,
                              std::size_t warmup = 10) {
  LatencyReport rep;
  rep.estimator = "iaa";
  rep.n_ch = a.n_ch();
  rep.l = a.l();
  rep.iters = cfg.max_iters;
  rep.hardware = hardware_note();
  volatile double sink = 0.0;
  rep.samples_ms = time_each(vectors.size(), warmup, [&](std::size_t i) {
    sink = sink + iaa_spectrum(a, vectors[i], cfg).power[0];
  });
  summarize(rep);
  return rep;
}

}  // namespace srspec
