#include <catch_amalgamated.hpp>

#include "srspec/array_model.hpp"
#include "test_helpers.hpp"

using namespace srspec;
using Catch::Approx;

TEST_CASE("ULA spacings are half-wavelength multiples", "[array_model]") {
  const auto g = ArrayGeometry::ula(86);
  REQUIRE(g.n_ch() == 86);
  for (std::size_t n = 0; n < 86; ++n) CHECK(g.spacings()[n] == 0.5 * static_cast<double>(n));
  CHECK(g.is_half_wavelength_ula());
  CHECK(g.id() == "ula86");
}

TEST_CASE("geometry invariants are enforced", "[array_model]") {
  CHECK_THROWS_AS(ArrayGeometry({}), ValidationError);
  CHECK_THROWS_AS(ArrayGeometry({0.1, 0.5}), ValidationError);
  CHECK_THROWS_AS(ArrayGeometry({0.0, 0.5, 0.5}), ValidationError);
  const ArrayGeometry sparse({0.0, 0.5, 1.5, 3.0});
  CHECK_FALSE(sparse.is_half_wavelength_ula());
  CHECK(sparse.id().rfind("custom4-", 0) == 0);
}

TEST_CASE("angular grid is uniform in sine", "[array_model]") {
  const AngularGrid grid(256);
  REQUIRE(grid.size() == 256);
  for (std::size_t k = 0; k < 256; ++k) CHECK(grid.sin_values()[k] == -1.0 + 2.0 * static_cast<double>(k) / 256.0);
  CHECK(grid.theta_values().front() == Approx(-90.0));
  for (std::size_t k = 1; k < 256; ++k) CHECK(grid.theta_values()[k] > grid.theta_values()[k - 1]);
  CHECK(grid.theta_values().back() < 90.0);
  CHECK(grid.nearest_index(0.0) == 128);
  CHECK(grid.nearest_index(0.999) == 0);  // wraps: +1 aliases to -1
  CHECK(grid_distance(0, 255, 256) == 1);
}

TEST_CASE("steering vector examples", "[array_model]") {
  const auto g4 = ArrayGeometry::ula(4);
  const CVector broadside = steering_vector(g4, 0.0);
  for (Eigen::Index n = 0; n < 4; ++n) CHECK(broadside[n] == cplx(1.0, 0.0));

  const CVector a30 = steering_vector(g4, 0.5);
  const cplx expect[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  for (Eigen::Index n = 0; n < 4; ++n) CHECK(std::abs(a30[n] - expect[n]) < 1e-15);

  const auto g86 = ArrayGeometry::ula(86);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    const CVector a = steering_vector(g86, u(rng));
    CHECK(a[0] == cplx(1.0, 0.0));
    CHECK((a.cwiseAbs().array() - 1.0).abs().maxCoeff() < 1e-12);
  }
  CHECK_THROWS_AS(steering_vector(g4, 1.0001), std::domain_error);
  CHECK_THROWS_AS(steering_vector(g4, std::nan("")), std::domain_error);
}

TEST_CASE("steering matrix columns match steering vectors", "[array_model]") {
  const auto a = build_steering_matrix(ArrayGeometry::ula(10), AngularGrid(256));
  REQUIRE(a.entries.rows() == 10);
  REQUIRE(a.entries.cols() == 256);
  CHECK((a.entries.row(0).array() == cplx(1.0, 0.0)).all());
  CHECK((a.entries.cwiseAbs().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK((a.entries.col(128).array() == cplx(1.0, 0.0)).all());
  for (std::size_t k : {0u, 17u, 200u, 255u})
    CHECK(a.entries.col(static_cast<Eigen::Index>(k)) == steering_vector(a.geometry, a.grid.sin_values()[k]));
}

TEST_CASE("dbf spectrum examples", "[array_model]") {
  const auto a10 = build_steering_matrix(ArrayGeometry::ula(10), AngularGrid(256));
  const CVector s = dbf_spectrum(a10, a10.entries.col(77));
  CHECK(std::abs(s[77] - cplx(1.0, 0.0)) < 1e-14);
  CHECK(dbf_spectrum(a10, CVector::Zero(10)).isZero(0.0));

  const auto a4 = build_steering_matrix(ArrayGeometry::ula(4), AngularGrid(256));
  const CVector s4 = dbf_spectrum(a4, steering_vector(a4.geometry, 0.5));
  CHECK(std::abs(s4[128]) < 1e-15);

  CHECK_THROWS_AS(dbf_spectrum(a4, CVector::Zero(5)), ValidationError);
}

TEST_CASE("dbf by matrix product equals the FFT route", "[array_model][property]") {
  std::mt19937_64 rng(11);
  for (std::size_t n_ch : {1u, 4u, 10u, 40u, 86u, 300u}) {
    const auto a = build_steering_matrix(ArrayGeometry::ula(n_ch), AngularGrid(256));
    for (int t = 0; t < 50; ++t) {
      const CVector y = test::random_complex(rng, static_cast<Eigen::Index>(n_ch));
      CHECK(test::rel_err(dbf_spectrum_fft(a, y), dbf_spectrum(a, y)) < 1e-10);
    }
  }
  const auto sparse = build_steering_matrix(ArrayGeometry({0.0, 0.5, 1.5}), AngularGrid(64));
  CHECK_THROWS_AS(dbf_spectrum_fft(sparse, CVector::Ones(3)), ValidationError);
}

TEST_CASE("dbf is linear in the beam vector", "[array_model][property]") {
  std::mt19937_64 rng(5);
  const auto a = build_steering_matrix(ArrayGeometry::ula(40), AngularGrid(256));
  for (int t = 0; t < 100; ++t) {
    const CVector y = test::random_complex(rng, 40);
    const cplx c = test::random_complex(rng, 1)[0];
    CHECK(test::rel_err(dbf_spectrum(a, c * y), c * dbf_spectrum(a, y)) < 1e-13);
  }
}
