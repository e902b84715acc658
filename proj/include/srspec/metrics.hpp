#pragma once

// Image-quality metrics for range-azimuth maps on a [0, 1] scale.
//   NMSE = MSE(truth, pred) / Var(truth)   (population variance; not symmetric)
//   PSNR = 10 log10(peak^2 / MSE), +infinity when MSE == 0
//   SSIM = mean local SSIM, 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
//          K2 = 0.03, dynamic range 1, evaluated only where the window fits.

#include "srspec/core.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace srspec::metrics {

inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

namespace detail {
inline void check_same_dims(const RMatrix& a, const RMatrix& b, const char* who) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ValidationError(std::string(who) + ": dimension mismatch (" + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()) + ")");
  if (a.size() == 0) throw ValidationError(std::string(who) + ": empty maps");
}

inline double mse(const RMatrix& a, const RMatrix& b) { return (a - b).squaredNorm() / static_cast<double>(a.size()); }
}  // namespace detail

inline double nmse(const RMatrix& truth, const RMatrix& pred) {
  detail::check_same_dims(truth, pred, "nmse");
  const double mean = truth.mean();
  const double var = (truth.array() - mean).square().mean();
  if (!(var > 0.0)) throw ValidationError("nmse: truth map is constant, NMSE is undefined");
  return detail::mse(truth, pred) / var;
}

inline double psnr(const RMatrix& truth, const RMatrix& pred, double peak = 1.0) {
  detail::check_same_dims(truth, pred, "psnr");
  const double m = detail::mse(truth, pred);
  if (m == 0.0) return kPsnrInfinity;
  return 10.0 * std::log10(peak * peak / m);
}

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

inline RVector gaussian_kernel(int size, double sigma) {
  RVector k(size);
  const double c = 0.5 * (size - 1);
  for (int i = 0; i < size; ++i) k[i] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
  return k / k.sum();
}

namespace detail {
// Valid-mode separable correlation: output is (rows - w + 1) x (cols - w + 1).
inline RMatrix filter_valid(const RMatrix& img, const RVector& k) {
  const Eigen::Index w = k.size();
  const Eigen::Index orow = img.rows() - w + 1, ocol = img.cols() - w + 1;
  RMatrix horiz = RMatrix::Zero(img.rows(), ocol);
  for (Eigen::Index t = 0; t < w; ++t) horiz += k[t] * img.middleCols(t, ocol);
  RMatrix out = RMatrix::Zero(orow, ocol);
  for (Eigen::Index t = 0; t < w; ++t) out += k[t] * horiz.middleRows(t, orow);
  return out;
}
}  // namespace detail

inline double ssim(const RMatrix& a, const RMatrix& b, const SsimParams& p = {}) {
  detail::check_same_dims(a, b, "ssim");
  if (a.rows() < p.window || a.cols() < p.window)
    throw ValidationError("ssim: maps of " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                          " are smaller than the " + std::to_string(p.window) + "x" + std::to_string(p.window) +
                          " window");
  const RVector k = gaussian_kernel(p.window, p.sigma);
  const RMatrix mu_a = detail::filter_valid(a, k);
  const RMatrix mu_b = detail::filter_valid(b, k);
  const RMatrix e_aa = detail::filter_valid(a.cwiseProduct(a), k);
  const RMatrix e_bb = detail::filter_valid(b.cwiseProduct(b), k);
  const RMatrix e_ab = detail::filter_valid(a.cwiseProduct(b), k);
  const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
  const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);
  const auto ma = mu_a.array(), mb = mu_b.array();
  const auto var_a = e_aa.array() - ma * ma;
  const auto var_b = e_bb.array() - mb * mb;
  const auto cov = e_ab.array() - ma * mb;
  const auto s = ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
  return s.mean();
}

struct FrameMetrics {
  std::string frame;
  double nmse = 0.0;
  double ssim = 0.0;
  double psnr_db = 0.0;
};

struct MetricReport {
  std::vector<FrameMetrics> frames;
  FrameMetrics mean{"mean"};
  FrameMetrics median{"median"};
};

inline FrameMetrics evaluate_frame(const std::string& name, const RMatrix& truth, const RMatrix& pred) {
  return {name, nmse(truth, pred), ssim(truth, pred), psnr(truth, pred)};
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline MetricReport aggregate(std::vector<FrameMetrics> frames) {
  MetricReport r;
  r.frames = std::move(frames);
  if (r.frames.empty()) return r;
  std::vector<double> n, s, p;
  for (const auto& f : r.frames) {
    n.push_back(f.nmse);
    s.push_back(f.ssim);
    p.push_back(f.psnr_db);
  }
  auto mean = [](const std::vector<double>& v) {
    double t = 0.0;
    for (double x : v) t += x;
    return t / static_cast<double>(v.size());
  };
  r.mean = {"mean", mean(n), mean(s), mean(p)};
  r.median = {"median", median_of(n), median_of(s), median_of(p)};
  return r;
}

}  // namespace srspec::metrics
