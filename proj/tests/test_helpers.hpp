#pragma once

#include "srspec/core.hpp"

#include <random>

namespace srspec::test {

inline CVector random_complex(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  CVector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = {g(rng), g(rng)};
  return v;
}

inline double rel_err(const CVector& a, const CVector& b) {
  const double denom = std::max(b.norm(), 1e-300);
  return (a - b).norm() / denom;
}

}  // namespace srspec::test
