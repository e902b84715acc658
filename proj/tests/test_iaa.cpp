#include <catch_amalgamated.hpp>

#include "srspec/iaa.hpp"
#include "srspec/scene_sim.hpp"
#include "test_helpers.hpp"

#include <fstream>

using namespace srspec;

namespace {

const SteeringMatrix& ula(std::size_t n) {
  static std::map<std::size_t, SteeringMatrix> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, build_steering_matrix(ArrayGeometry::ula(n), AngularGrid(256))).first;
  return it->second;
}

}  // namespace

TEST_CASE("zero beam vector gives zero spectrum after one iteration", "[iaa]") {
  const auto r = iaa_spectrum(ula(10), CVector::Zero(10), IaaConfig{});
  CHECK(r.coeffs.isZero(0.0));
  CHECK(r.power.isZero(0.0));
  CHECK(r.iters_used == 1);
  CHECK(r.converged);
}

TEST_CASE("one iteration is a single WLS pass over the DBF-initialized covariance", "[iaa]") {
  const auto& a = ula(10);
  std::mt19937_64 rng(4);
  const CVector y = test::random_complex(rng, 10);
  IaaConfig cfg{1, std::numeric_limits<double>::infinity(), 1e-6};
  const auto r = iaa_spectrum(a, y, cfg);
  CHECK(r.iters_used == 1);
  CHECK(r.converged);

  // Same pass written with an explicit solve, independent of the factor reuse.
  const RVector p0 = dbf_spectrum(a, y).cwiseAbs2();
  CMatrix cov = a.entries * p0.cast<cplx>().asDiagonal() * a.entries.adjoint();
  cov.diagonal().array() += 1e-6 * cov.trace().real() / 10.0;
  const CMatrix rinv_a = cov.fullPivLu().solve(a.entries);
  const CVector rinv_y = cov.fullPivLu().solve(y);
  for (Eigen::Index l = 0; l < 256; ++l) {
    const cplx s = a.entries.col(l).dot(rinv_y) / a.entries.col(l).dot(rinv_a.col(l));
    CHECK(std::abs(std::abs(r.coeffs[l]) - std::abs(s)) < 1e-9 * std::max(1.0, std::abs(s)));
  }
}

TEST_CASE("power is the squared modulus of the coefficients", "[iaa]") {
  std::mt19937_64 rng(8);
  const auto r = iaa_spectrum(ula(16), test::random_complex(rng, 16), IaaConfig{});
  CHECK((r.power - r.coeffs.cwiseAbs2()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("initial power equals the squared DBF magnitude", "[iaa]") {
  std::mt19937_64 rng(9);
  const auto& a = ula(10);
  const CVector y = test::random_complex(rng, 10);
  // With max_iters = 1 and loading huge, R is dominated by the identity and the
  // WLS pass reduces to the matched filter: coefficients tend to DBF.
  const auto r = iaa_spectrum(a, y, IaaConfig{1, 1e300, 1e12});
  const CVector dbf = dbf_spectrum(a, y);
  CHECK((r.coeffs - dbf).cwiseAbs().maxCoeff() < 1e-9 * dbf.cwiseAbs().maxCoeff());
}

TEST_CASE("noiseless on-grid single target", "[iaa]") {
  const auto& a = ula(10);
  const Eigen::Index k = 150;
  const CVector y = a.entries.col(k);
  const auto r = iaa_spectrum(a, y, IaaConfig{15, 1e-4, 1e-6});
  Eigen::Index peak;
  r.coeffs.cwiseAbs().maxCoeff(&peak);
  CHECK(peak == k);
  CHECK(std::abs(std::abs(r.coeffs[k]) - 1.0) < 1e-2);
  const RVector dbf = dbf_spectrum(a, y).cwiseAbs();
  for (Eigen::Index l = 0; l < 256; ++l) {
    if (grid_distance(static_cast<std::size_t>(l), static_cast<std::size_t>(k), 256) == 0) continue;
    CHECK(std::abs(r.coeffs[l]) <= dbf[l] + 1e-12);
  }
}

TEST_CASE("matches the extended-precision reference", "[iaa][oracle]") {
  std::ifstream in(std::string(SRSPEC_FIXTURE_DIR) + "/iaa_reference.json");
  REQUIRE(in);
  const auto doc = nlohmann::json::parse(in);
  for (const auto& c : doc.at("cases")) {
    const auto n = c.at("n_ch").get<std::size_t>();
    const auto& a = ula(n);
    CVector y(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) y[static_cast<Eigen::Index>(i)] = {c["y_re"][i], c["y_im"][i]};
    const auto expect = c.at("abs_coeffs").get<std::vector<double>>();
    const auto r = iaa_spectrum(a, y, IaaConfig{c.at("iters").get<int>(), 0.0, c.at("loading").get<double>()});
    REQUIRE(r.iters_used == c.at("iters").get<int>());
    double worst = 0.0, peak = 0.0;
    for (std::size_t l = 0; l < expect.size(); ++l) {
      worst = std::max(worst, std::abs(std::abs(r.coeffs[static_cast<Eigen::Index>(l)]) - expect[l]));
      peak = std::max(peak, expect[l]);
    }
    CAPTURE(n, c.at("target_bins").dump());
    CHECK(worst / peak < 1e-6);
  }
}

TEST_CASE("coefficients scale with the beam vector", "[iaa][property]") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 20; ++t) {
    const auto& a = ula(t % 2 ? 10 : 40);
    const CVector y = test::random_complex(rng, a.entries.rows());
    const cplx c = test::random_complex(rng, 1, 3.0)[0];
    const auto base = iaa_spectrum(a, y, IaaConfig{});
    const auto scaled = iaa_spectrum(a, c * y, IaaConfig{});
    CHECK(test::rel_err(scaled.coeffs, c * base.coeffs) < 1e-8);
  }
}

TEST_CASE("well separated targets are recovered with correct amplitude", "[iaa][property]") {
  const auto& a = ula(40);
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> bin(0, 255);
  std::uniform_real_distribution<double> mag(0.3, 1.0), ph(0.0, 6.283185307179586);
  for (int t = 0; t < 20; ++t) {
    std::vector<Eigen::Index> bins;
    while (bins.size() < 3) {
      const int b = bin(rng);
      bool ok = true;
      for (auto o : bins) ok &= grid_distance(static_cast<std::size_t>(o), static_cast<std::size_t>(b), 256) >= 4;
      if (ok) bins.push_back(b);
    }
    CVector y = CVector::Zero(40);
    std::vector<cplx> amps;
    for (auto b : bins) {
      amps.push_back(std::polar(mag(rng), ph(rng)));
      y += amps.back() * a.entries.col(b);
    }
    const auto r = iaa_spectrum(a, y, IaaConfig{});
    for (std::size_t i = 0; i < bins.size(); ++i)
      CHECK(std::abs(std::abs(r.coeffs[bins[i]]) - std::abs(amps[i])) <= 0.05 * std::abs(amps[i]));
  }
}

TEST_CASE("input validation", "[iaa]") {
  const auto& a = ula(10);
  CVector bad = CVector::Ones(10);
  bad[3] = {std::numeric_limits<double>::quiet_NaN(), 0.0};
  CHECK_THROWS_AS(iaa_spectrum(a, bad, IaaConfig{}), ValidationError);
  CHECK_THROWS_AS(iaa_spectrum(a, CVector::Ones(9), IaaConfig{}), ValidationError);
  CHECK_THROWS_AS(iaa_spectrum(a, CVector::Ones(10), IaaConfig{0, 1e-4, 1e-6}), ValidationError);
}

TEST_CASE("zero loading on a rank-deficient covariance reports the fix", "[iaa]") {
  // Single-element array on a 2-point grid: a = [1], R = P0 + P1 > 0, fine.
  // Use a 4-element array with a grid of 2 points: R has rank <= 2 < 4.
  const auto a = build_steering_matrix(ArrayGeometry::ula(4), AngularGrid(2));
  try {
    iaa_spectrum(a, a.entries.col(0), IaaConfig{5, 0.0, 0.0});
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("loading > 0") != std::string::npos);
  }
  CHECK_NOTHROW(iaa_spectrum(a, a.entries.col(0), IaaConfig{5, 0.0, 1e-6}));
}

TEST_CASE("batch is order preserving and worker independent", "[iaa]") {
  const auto& a = ula(10);
  std::mt19937_64 rng(2);
  const CVector y = test::random_complex(rng, 10);
  const auto triple = iaa_batch(a, {y, y, y}, IaaConfig{});
  REQUIRE(triple.results.size() == 3);
  CHECK(triple.errors.empty());
  CHECK(triple.results[0].coeffs == triple.results[1].coeffs);
  CHECK(triple.results[1].coeffs == triple.results[2].coeffs);
  CHECK(iaa_batch(a, {}, IaaConfig{}).results.empty());

  std::vector<BeamVector> many;
  for (int i = 0; i < 40; ++i) many.push_back(test::random_complex(rng, 10));
  CVector bad = CVector::Ones(10);
  bad[0] = {std::numeric_limits<double>::infinity(), 0.0};
  many[7] = bad;
  const auto serial = iaa_batch(a, many, IaaConfig{}, 1);
  const auto parallel = iaa_batch(a, many, IaaConfig{}, 8);
  REQUIRE(serial.errors.size() == 1);
  CHECK(serial.errors[0].first == 7);
  REQUIRE(parallel.errors.size() == 1);
  for (std::size_t i = 0; i < many.size(); ++i) CHECK(serial.results[i].coeffs == parallel.results[i].coeffs);
}

TEST_CASE("latency report", "[iaa][timing]") {
  std::mt19937_64 rng(1);
  std::vector<BeamVector> v10, v40;
  for (int i = 0; i < 100; ++i) {
    v10.push_back(test::random_complex(rng, 10));
    v40.push_back(test::random_complex(rng, 40));
  }
  const auto r10 = time_iaa(ula(10), v10, IaaConfig{15, 0.0, 1e-6});
  CHECK(r10.samples_ms.size() == 100);
  CHECK(r10.n_ch == 10);
  CHECK(r10.l == 256);
  CHECK(r10.iters == 15);
  CHECK(!r10.hardware.empty());
  CHECK(std::isfinite(r10.median_ms));
  CHECK(r10.median_ms > 0.0);
  const auto r40 = time_iaa(ula(40), v40, IaaConfig{15, 0.0, 1e-6});
  CHECK(r40.median_ms > r10.median_ms);
}
