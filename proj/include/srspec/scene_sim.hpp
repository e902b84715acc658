#pragma once

// Synthetic point-target scenes: single-snapshot beam vectors y = A(theta) s + n
// and raw ADC cubes whose unnormalized 2D FFT puts each target at its
// (range_bin, doppler_bin) with channel fiber amplitude * N_fast * N_slow * a(theta).
//
// Noise is circular complex Gaussian: real and imaginary parts each have
// variance noise_sigma^2 / 2. SNR is per element, |s_max|^2 / noise_sigma^2.

#include "srspec/array_model.hpp"

#include "json.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace srspec {

struct TargetSpec {
  double sin_theta = 0.0;
  cplx amplitude{1.0, 0.0};
  double range_bin = 0.0;
  double doppler_bin = 0.0;

  void validate() const {
    if (!(std::abs(sin_theta) <= 1.0)) throw ValidationError("target sin_theta outside [-1, 1]");
    if (!(std::abs(amplitude) > 0.0)) throw ValidationError("target amplitude must be nonzero");
  }
  friend bool operator==(const TargetSpec&, const TargetSpec&) = default;
};

struct SceneSpec {
  std::vector<TargetSpec> targets;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    for (const auto& t : targets) t.validate();
    if (!(noise_sigma >= 0.0)) throw ValidationError("noise_sigma must be nonnegative");
  }
  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

inline void to_json(nlohmann::json& j, const TargetSpec& t) {
  j = {{"sin_theta", t.sin_theta},
       {"theta_deg", std::asin(t.sin_theta) * 180.0 / std::numbers::pi},
       {"amplitude", {t.amplitude.real(), t.amplitude.imag()}},
       {"range_bin", t.range_bin},
       {"doppler_bin", t.doppler_bin}};
}

inline void from_json(const nlohmann::json& j, TargetSpec& t) {
  t.sin_theta = j.at("sin_theta").get<double>();
  const auto& a = j.at("amplitude");
  t.amplitude = {a.at(0).get<double>(), a.at(1).get<double>()};
  t.range_bin = j.value("range_bin", 0.0);
  t.doppler_bin = j.value("doppler_bin", 0.0);
}

inline void to_json(nlohmann::json& j, const SceneSpec& s) {
  j = {{"targets", s.targets}, {"noise_sigma", s.noise_sigma}, {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, SceneSpec& s) {
  s.targets = j.at("targets").get<std::vector<TargetSpec>>();
  s.noise_sigma = j.at("noise_sigma").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
}

/// Raw ADC samples, N_fast x N_slow x N_ch, channel innermost.
struct AdcCube {
  Tensor3<cplx> data;

  std::size_t n_fast() const { return data.d0; }
  std::size_t n_slow() const { return data.d1; }
  std::size_t n_ch() const { return data.d2; }
};

namespace detail {

inline cplx complex_gaussian(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> n01(0.0, 1.0);
  const double scale = sigma / std::numbers::sqrt2;
  const double re = n01(rng);
  const double im = n01(rng);
  return {scale * re, scale * im};
}

// exp(j 2 pi bin * i / n) for i in [0, n), with the phase reduced modulo one
// cycle first so integer bins land exactly on DFT frequencies.
inline std::vector<cplx> bin_tone(double bin, std::size_t n) {
  std::vector<cplx> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double cycles = std::fmod(bin * static_cast<double>(i), static_cast<double>(n));
    out[i] = std::polar(1.0, 2.0 * std::numbers::pi * cycles / static_cast<double>(n));
  }
  return out;
}

}  // namespace detail

inline BeamVector simulate_beam_vector(const ArrayGeometry& geom, const SceneSpec& scene) {
  scene.validate();
  BeamVector y = BeamVector::Zero(static_cast<Eigen::Index>(geom.n_ch()));
  for (const auto& t : scene.targets) y += t.amplitude * steering_vector(geom, t.sin_theta);
  if (scene.noise_sigma > 0.0) {
    std::mt19937_64 rng(scene.seed);
    for (Eigen::Index n = 0; n < y.size(); ++n) y[n] += detail::complex_gaussian(rng, scene.noise_sigma);
  }
  return y;
}

inline AdcCube simulate_adc_cube(const ArrayGeometry& geom, const SceneSpec& scene, std::size_t n_fast,
                                 std::size_t n_slow) {
  if (n_fast == 0 || n_slow == 0) throw ValidationError("ADC cube dimensions must be positive");
  scene.validate();
  const std::size_t n_ch = geom.n_ch();
  AdcCube cube{Tensor3<cplx>(n_fast, n_slow, n_ch)};
  for (const auto& t : scene.targets) {
    const auto ef = detail::bin_tone(t.range_bin, n_fast);
    const auto ew = detail::bin_tone(t.doppler_bin, n_slow);
    const CVector a = t.amplitude * steering_vector(geom, t.sin_theta);
    for (std::size_t f = 0; f < n_fast; ++f)
      for (std::size_t w = 0; w < n_slow; ++w) {
        const cplx tone = ef[f] * ew[w];
        cplx* fiber = cube.data.fiber(f, w);
        for (std::size_t c = 0; c < n_ch; ++c) fiber[c] += tone * a[static_cast<Eigen::Index>(c)];
      }
  }
  if (scene.noise_sigma > 0.0) {
    std::mt19937_64 rng(scene.seed);
    for (auto& v : cube.data.data) v += detail::complex_gaussian(rng, scene.noise_sigma);
  }
  return cube;
}

/// Sampling ranges for random training/evaluation scenes.
struct ScenePolicy {
  int k_max = 3;
  double min_separation_cells = 2.0;  // in grid cells of width 2/grid_l in sin(theta)
  std::size_t grid_l = 256;
  double sin_min = -1.0;
  double sin_max = 1.0;
  bool on_grid = false;
  double amp_min = 0.05;
  double amp_max = 1.0;
  double snr_db_min = 0.0;
  double snr_db_max = 30.0;
  bool noiseless = false;
  // Same noise level for every scene: a full-scale (amp_max) target gets
  // snr_db_max, weaker scenes proportionally less, as in range-Doppler bins
  // sharing one noise floor. The SNR draw is then unused.
  bool fixed_noise_floor = false;
  // Frame-level placement; integer bins in [0, n) when integer_bins is set.
  std::size_t range_bins = 100;
  std::size_t doppler_bins = 64;
  bool integer_bins = true;

  void validate() const {
    if (k_max < 1) throw ValidationError("scene policy: k_max must be >= 1");
    if (grid_l == 0) throw ValidationError("scene policy: grid_l must be positive");
    if (!(min_separation_cells >= 0.0)) throw ValidationError("scene policy: min_separation_cells must be >= 0");
    if (!(sin_min >= -1.0 && sin_max <= 1.0 && sin_min < sin_max))
      throw ValidationError("scene policy: need -1 <= sin_min < sin_max <= 1");
    if (!(amp_min > 0.0 && amp_min <= amp_max)) throw ValidationError("scene policy: need 0 < amp_min <= amp_max");
    if (!(snr_db_min <= snr_db_max)) throw ValidationError("scene policy: need snr_db_min <= snr_db_max");
    if (range_bins == 0 || doppler_bins == 0) throw ValidationError("scene policy: bin ranges must be positive");
    const double sep = min_separation_cells * 2.0 / static_cast<double>(grid_l);
    if (static_cast<double>(k_max - 1) * sep >= (sin_max - sin_min))
      throw ValidationError("scene policy: k_max targets cannot satisfy the separation constraint");
  }
};

inline void to_json(nlohmann::json& j, const ScenePolicy& p) {
  j = {{"k_max", p.k_max},
       {"min_separation_cells", p.min_separation_cells},
       {"grid_l", p.grid_l},
       {"sin_min", p.sin_min},
       {"sin_max", p.sin_max},
       {"on_grid", p.on_grid},
       {"amp_min", p.amp_min},
       {"amp_max", p.amp_max},
       {"snr_db_min", p.snr_db_min},
       {"snr_db_max", p.snr_db_max},
       {"noiseless", p.noiseless},
       {"fixed_noise_floor", p.fixed_noise_floor},
       {"range_bins", p.range_bins},
       {"doppler_bins", p.doppler_bins},
       {"integer_bins", p.integer_bins}};
}

inline void from_json(const nlohmann::json& j, ScenePolicy& p) {
  ScenePolicy d;
  p.k_max = j.value("k_max", d.k_max);
  p.min_separation_cells = j.value("min_separation_cells", d.min_separation_cells);
  p.grid_l = j.value("grid_l", d.grid_l);
  p.sin_min = j.value("sin_min", d.sin_min);
  p.sin_max = j.value("sin_max", d.sin_max);
  p.on_grid = j.value("on_grid", d.on_grid);
  p.amp_min = j.value("amp_min", d.amp_min);
  p.amp_max = j.value("amp_max", d.amp_max);
  p.snr_db_min = j.value("snr_db_min", d.snr_db_min);
  p.snr_db_max = j.value("snr_db_max", d.snr_db_max);
  p.noiseless = j.value("noiseless", d.noiseless);
  p.fixed_noise_floor = j.value("fixed_noise_floor", d.fixed_noise_floor);
  p.range_bins = j.value("range_bins", d.range_bins);
  p.doppler_bins = j.value("doppler_bins", d.doppler_bins);
  p.integer_bins = j.value("integer_bins", d.integer_bins);
}

/// Separation on the periodic sine axis [-1, 1).
inline double sin_separation(double a, double b) {
  const double d = std::abs(a - b);
  return std::min(d, 2.0 - d);
}

inline SceneSpec sample_training_scene(std::uint64_t rng_seed, const ScenePolicy& policy) {
  policy.validate();
  std::mt19937_64 rng(rng_seed);
  std::uniform_int_distribution<int> k_dist(1, policy.k_max);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double cell = 2.0 / static_cast<double>(policy.grid_l);
  const double sep = policy.min_separation_cells * cell;
  const double span = policy.sin_max - policy.sin_min;

  SceneSpec scene;
  const int k = k_dist(rng);
  for (int i = 0; i < k; ++i) {
    TargetSpec t;
    bool placed = false;
    for (int attempt = 0; attempt < 100000 && !placed; ++attempt) {
      double s = policy.sin_min + span * unit(rng);
      if (policy.on_grid) {
        s = -1.0 + cell * std::round((s + 1.0) / cell);
        if (s >= 1.0) s -= 2.0;
        if (s < policy.sin_min || s > policy.sin_max) continue;
      }
      placed = std::all_of(scene.targets.begin(), scene.targets.end(),
                           [&](const TargetSpec& o) { return sin_separation(o.sin_theta, s) >= sep; });
      if (placed) t.sin_theta = s;
    }
    if (!placed) throw DataError("sample_training_scene: could not satisfy the separation constraint");
    const double log_mag = std::log(policy.amp_min) + (std::log(policy.amp_max) - std::log(policy.amp_min)) * unit(rng);
    t.amplitude = std::polar(std::exp(log_mag), 2.0 * std::numbers::pi * unit(rng));
    if (policy.integer_bins) {
      t.range_bin = static_cast<double>(std::uniform_int_distribution<std::size_t>(0, policy.range_bins - 1)(rng));
      t.doppler_bin =
          static_cast<double>(std::uniform_int_distribution<std::size_t>(0, policy.doppler_bins - 1)(rng));
    } else {
      t.range_bin = unit(rng) * static_cast<double>(policy.range_bins);
      t.doppler_bin = unit(rng) * static_cast<double>(policy.doppler_bins);
    }
    scene.targets.push_back(t);
  }
  const double drawn_db = policy.snr_db_min + (policy.snr_db_max - policy.snr_db_min) * unit(rng);
  const double snr_db = policy.fixed_noise_floor ? policy.snr_db_max : drawn_db;
  double peak = 0.0;
  for (const auto& t : scene.targets) peak = std::max(peak, std::abs(t.amplitude));
  const double ref = policy.fixed_noise_floor ? policy.amp_max : peak;
  scene.noise_sigma = policy.noiseless ? 0.0 : ref / std::pow(10.0, snr_db / 20.0);
  scene.seed = mix_seed(rng_seed, 0xA5A5);
  return scene;
}

}  // namespace srspec
