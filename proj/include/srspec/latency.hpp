#pragma once

#include "srspec/core.hpp"

#include "json.hpp"

#include <chrono>
#include <fstream>
#include <numeric>

namespace srspec {

struct LatencyReport {
  std::string estimator;
  std::size_t n_ch = 0;
  std::size_t l = 0;
  int iters = 0;  // IAA iteration budget; 0 for non-iterative estimators
  std::size_t batch = 1;
  std::string hardware;
  std::vector<double> samples_ms;  // per beam vector
  double mean_ms = 0.0;
  double median_ms = 0.0;
};

inline std::string hardware_note() {
  std::string model = "unknown cpu";
  std::ifstream cpuinfo("/proc/cpuinfo");
  for (std::string line; std::getline(cpuinfo, line);) {
    if (line.rfind("model name", 0) == 0) {
      if (auto pos = line.find(':'); pos != std::string::npos) model = line.substr(pos + 2);
      break;
    }
  }
  return model + ", " + std::to_string(std::thread::hardware_concurrency()) + " hw threads";
}

inline void summarize(LatencyReport& r) {
  if (r.samples_ms.empty()) return;
  r.mean_ms = std::accumulate(r.samples_ms.begin(), r.samples_ms.end(), 0.0) / static_cast<double>(r.samples_ms.size());
  std::vector<double> s = r.samples_ms;
  const std::size_t mid = s.size() / 2;
  std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(mid), s.end());
  double med = s[mid];
  if (s.size() % 2 == 0) {
    std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(mid - 1), s.end());
    med = 0.5 * (med + s[mid - 1]);
  }
  r.median_ms = med;
}

/// Times fn(item) once per item after `warmup` untimed calls; one sample per call.
template <typename Fn>
std::vector<double> time_each(std::size_t items, std::size_t warmup, Fn&& fn) {
  for (std::size_t i = 0; i < std::min(warmup, items); ++i) fn(i);
  std::vector<double> ms;
  ms.reserve(items);
  for (std::size_t i = 0; i < items; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn(i);
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return ms;
}

inline nlohmann::json to_json(const LatencyReport& r) {
  return {{"estimator", r.estimator}, {"n_ch", r.n_ch},         {"l", r.l},
          {"iters", r.iters},         {"batch", r.batch},       {"hardware", r.hardware},
          {"samples", r.samples_ms.size()}, {"mean_ms", r.mean_ms}, {"median_ms", r.median_ms}};
}

}  // namespace srspec
