#include <catch_amalgamated.hpp>

#include "srspec/rd_pipeline.hpp"
#include "test_helpers.hpp"

using namespace srspec;

namespace {

struct ConstantEstimator {
  std::size_t l;
  double value;
  std::size_t grid_size() const { return l; }
  RVector magnitude(const BeamVector&) const { return RVector::Constant(static_cast<Eigen::Index>(l), value); }
};

struct ThrowingEstimator {
  std::size_t grid_size() const { return 4; }
  RVector magnitude(const BeamVector& y) const {
    if (std::abs(y[0]) > 0.5) throw std::runtime_error("boom");
    return RVector::Zero(4);
  }
};

}  // namespace

TEST_CASE("2D FFT of a constant concentrates at DC", "[rd_pipeline]") {
  AdcCube cube{Tensor3<cplx>(16, 8, 2)};
  for (std::size_t f = 0; f < 16; ++f)
    for (std::size_t w = 0; w < 8; ++w) cube.data(f, w, 1) = 1.0;
  const auto rdc = adc_to_rdc(cube, 16, WindowKind::rectangular);
  CHECK(std::abs(rdc.data(0, 0, 1) - cplx(16.0 * 8.0, 0.0)) < 1e-12);
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t d = 0; d < 8; ++d) {
      CHECK(std::abs(rdc.data(r, d, 0)) == 0.0);
      if (r || d) CHECK(std::abs(rdc.data(r, d, 1)) <= 1e-9);
    }
}

TEST_CASE("range truncation keeps the first bins", "[rd_pipeline]") {
  const auto g = ArrayGeometry::ula(4);
  const auto cube = simulate_adc_cube(g, SceneSpec{{{0.2, {1, 0}, 40, 3}}, 0.0, 0}, 256, 64);
  const auto rdc = adc_to_rdc(cube, 100);
  CHECK(rdc.n_range() == 100);
  CHECK(rdc.n_doppler() == 64);
  CHECK(rdc.n_ch() == 4);
  CHECK(std::abs(rdc.data(40, 3, 0)) == Catch::Approx(256.0 * 64.0).epsilon(1e-12));
  CHECK_THROWS_AS(adc_to_rdc(cube, 257), ValidationError);
  CHECK_THROWS_AS(adc_to_rdc(cube, 0), ValidationError);
}

TEST_CASE("hann window tapers leakage", "[rd_pipeline]") {
  const auto g = ArrayGeometry::ula(1);
  const auto cube = simulate_adc_cube(g, SceneSpec{{{0.0, {1, 0}, 10.5, 4}}, 0.0, 0}, 64, 16);
  const auto rect = adc_to_rdc(cube, 64, WindowKind::rectangular);
  const auto hann = adc_to_rdc(cube, 64, WindowKind::hann);
  const double rect_far = std::abs(rect.data(30, 4, 0)) / std::abs(rect.data(10, 4, 0));
  const double hann_far = std::abs(hann.data(30, 4, 0)) / std::abs(hann.data(10, 4, 0));
  CHECK(hann_far < 0.1 * rect_far);
  CHECK(window_from_string("hann") == WindowKind::hann);
  CHECK_THROWS_AS(window_from_string("kaiser"), ValidationError);
}

TEST_CASE("beam vector extraction", "[rd_pipeline]") {
  RdcCube rdc{Tensor3<cplx>(3, 2, 4)};
  for (std::size_t c = 0; c < 4; ++c) rdc.data(2, 1, c) = {double(c), -double(c)};
  const CVector y = extract_beam_vector(rdc, 2, 1);
  for (Eigen::Index c = 0; c < 4; ++c) CHECK(y[c] == cplx(double(c), -double(c)));
  CHECK_THROWS_AS(extract_beam_vector(rdc, 3, 0), std::out_of_range);
  CHECK_THROWS_AS(extract_beam_vector(rdc, 0, 2), std::out_of_range);
}

TEST_CASE("assemble_rda with DBF", "[rd_pipeline]") {
  const auto a = build_steering_matrix(ArrayGeometry::ula(8), AngularGrid(64));
  const RdcCube zero{Tensor3<cplx>(5, 4, 8)};
  const auto rda0 = assemble_rda(zero, DbfEstimator(a));
  CHECK(rda0.n_range() == 5);
  CHECK(rda0.n_doppler() == 4);
  CHECK(rda0.l() == 64);
  CHECK(std::all_of(rda0.data.data.begin(), rda0.data.data.end(), [](double v) { return v == 0.0; }));

  const double s = a.grid.sin_values()[40];
  const auto cube = simulate_adc_cube(a.geometry, SceneSpec{{{s, {1, 0}, 3, 2}}, 0.0, 0}, 8, 4);
  const auto rda = assemble_rda(adc_to_rdc(cube, 5), DbfEstimator(a));
  const double* fiber = rda.data.fiber(3, 2);
  CHECK(std::max_element(fiber, fiber + 64) - fiber == 40);
}

TEST_CASE("assemble_rda plumbing", "[rd_pipeline]") {
  const RdcCube rdc{Tensor3<cplx>(3, 5, 2)};
  const auto rda = assemble_rda(rdc, ConstantEstimator{7, 0.25});
  CHECK(rda.l() == 7);
  CHECK(std::all_of(rda.data.data.begin(), rda.data.data.end(), [](double v) { return v == 0.25; }));

  RdcCube bad{Tensor3<cplx>(3, 5, 2)};
  bad.data(2, 4, 0) = 1.0;
  try {
    assemble_rda(bad, ThrowingEstimator{});
    FAIL("expected failure");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("(2, 4)") != std::string::npos);
  }
}

TEST_CASE("assemble_rda output shape depends only on cube dims and L", "[rd_pipeline][property]") {
  const auto a = build_steering_matrix(ArrayGeometry::ula(6), AngularGrid(32));
  std::mt19937_64 rng(3);
  RdcCube rdc{Tensor3<cplx>(4, 3, 6)};
  for (auto& v : rdc.data.data) v = test::random_complex(rng, 1)[0];
  const auto d = assemble_rda(rdc, DbfEstimator(a));
  const auto i = assemble_rda(rdc, IaaEstimator(a, IaaConfig{}));
  const auto c = assemble_rda(rdc, ConstantEstimator{32, 1.0});
  CHECK((d.data.d0 == i.data.d0 && i.data.d0 == c.data.d0));
  CHECK((d.data.d1 == i.data.d1 && i.data.d1 == c.data.d1));
  CHECK((d.data.d2 == i.data.d2 && i.data.d2 == c.data.d2));
}

TEST_CASE("assemble_rda is worker-count independent", "[rd_pipeline][property]") {
  const auto a = build_steering_matrix(ArrayGeometry::ula(8), AngularGrid(64));
  std::mt19937_64 rng(17);
  RdcCube rdc{Tensor3<cplx>(7, 6, 8)};
  for (auto& v : rdc.data.data) v = test::random_complex(rng, 1)[0];
  CHECK(assemble_rda(rdc, IaaEstimator(a, IaaConfig{}), 1).data == assemble_rda(rdc, IaaEstimator(a, IaaConfig{}), 5).data);
  CHECK(assemble_rda(rdc, DbfEstimator(a), 1).data == assemble_rda(rdc, DbfEstimator(a), 3).data);
}

TEST_CASE("Doppler averaging", "[rd_pipeline]") {
  RdaCube c{Tensor3<double>(2, 4, 3, 2.0)};
  const auto m = rda_to_ra(c, false);
  CHECK(m.data.rows() == 2);
  CHECK(m.data.cols() == 3);
  CHECK((m.data.array() == 2.0).all());
  CHECK_FALSE(m.normalized);

  RdaCube one{Tensor3<double>(2, 4, 3)};
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t k = 0; k < 3; ++k) one.data(r, 1, k) = 3.0;
  CHECK((rda_to_ra(one, false).data.array() == 0.75).all());

  RdaCube varied{Tensor3<double>(3, 2, 5)};
  for (std::size_t i = 0; i < varied.data.size(); ++i) varied.data.data[i] = 0.1 * static_cast<double>(i % 7);
  const auto n = rda_to_ra(varied, true);
  CHECK(n.normalized);
  CHECK(n.data.maxCoeff() == 1.0);
  CHECK(n.data.minCoeff() >= 0.0);

  const auto z = rda_to_ra(RdaCube{Tensor3<double>(2, 2, 2)}, true);
  CHECK(z.all_zero);
  CHECK(z.data.isZero(0.0));
}

TEST_CASE("end-to-end localization with DBF and IAA", "[rd_pipeline][property]") {
  const auto a = build_steering_matrix(ArrayGeometry::ula(10), AngularGrid(256));
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> kdist(0, 255), rdist(0, 19), ddist(0, 7);
  for (int t = 0; t < 5; ++t) {
    const int k = kdist(rng), r = rdist(rng), d = ddist(rng);
    const TargetSpec tgt{a.grid.sin_values()[static_cast<std::size_t>(k)], {1, 0}, double(r), double(d)};
    const auto rdc = adc_to_rdc(simulate_adc_cube(a.geometry, SceneSpec{{tgt}, 0.0, 0}, 32, 8), 20);
    for (int which = 0; which < 2; ++which) {
      const auto map = which == 0 ? rda_to_ra(assemble_rda(rdc, DbfEstimator(a)), true)
                                  : rda_to_ra(assemble_rda(rdc, IaaEstimator(a, IaaConfig{})), true);
      Eigen::Index rr, kk;
      map.data.maxCoeff(&rr, &kk);
      CHECK(rr == r);
      CHECK(kk == k);
    }
  }
}
