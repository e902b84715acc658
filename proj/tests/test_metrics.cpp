#include <catch_amalgamated.hpp>

#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "srspec/metrics.hpp"

using namespace srspec;
using namespace srspec::metrics;

namespace {

RMatrix from_rows(const std::vector<double>& flat, std::size_t rows, std::size_t cols) {
  RMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = flat[r * cols + c];
  return m;
}

RMatrix test_image(Eigen::Index rows = 24, Eigen::Index cols = 32) {
  RMatrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = 0.5 + 0.5 * std::sin(0.4 * static_cast<double>(r)) * std::cos(0.3 * static_cast<double>(c));
  return m;
}

RMatrix add_noise(const RMatrix& m, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  RMatrix out = m;
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] += sigma * g(rng);
  return out;
}

}  // namespace

TEST_CASE("identical maps", "[metrics]") {
  const RMatrix a = test_image();
  CHECK(nmse(a, a) == 0.0);
  CHECK(ssim(a, a) == Catch::Approx(1.0).margin(1e-12));
  CHECK(psnr(a, a) == kPsnrInfinity);
  const auto f = evaluate_frame("x", a, a);
  CHECK(f.psnr_db == kPsnrInfinity);
}

TEST_CASE("NMSE examples", "[metrics]") {
  const RMatrix a = test_image();
  const RMatrix mean = RMatrix::Constant(a.rows(), a.cols(), a.mean());
  CHECK(nmse(a, mean) == Catch::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(nmse(mean, a), ValidationError);
  CHECK_THROWS_AS(nmse(a, RMatrix::Zero(3, 3)), ValidationError);

  // Not symmetric: denominators are different variances.
  const RMatrix b = 0.5 * a;
  CHECK(nmse(a, b) != Catch::Approx(nmse(b, a)).epsilon(1e-6));
  CHECK(nmse(b, a) == Catch::Approx(4.0 * nmse(a, b)).epsilon(1e-12));
}

TEST_CASE("PSNR examples", "[metrics]") {
  const RMatrix a = test_image();
  CHECK(psnr(a, (a.array() + 0.1).matrix()) == Catch::Approx(20.0).epsilon(1e-12));
  CHECK(psnr(a, (a.array() - 0.01).matrix()) == Catch::Approx(40.0).epsilon(1e-12));
  CHECK(psnr(a, (a.array() + 0.1).matrix(), 2.0) == Catch::Approx(20.0 + 20.0 * std::log10(2.0)).epsilon(1e-12));
}

TEST_CASE("SSIM examples", "[metrics]") {
  RMatrix board(32, 32);
  for (Eigen::Index r = 0; r < 32; ++r)
    for (Eigen::Index c = 0; c < 32; ++c) board(r, c) = ((r / 4 + c / 4) % 2) ? 1.0 : 0.0;
  const RMatrix inverted = (1.0 - board.array()).matrix();
  CHECK(ssim(board, inverted) < 0.5);

  const RMatrix a = test_image();
  CHECK(ssim(a, add_noise(a, 1e-4, 3)) >= 0.999);
  CHECK_THROWS_AS(ssim(RMatrix::Zero(10, 40), RMatrix::Zero(10, 40)), ValidationError);
  CHECK_NOTHROW(ssim(RMatrix::Zero(11, 11), RMatrix::Zero(11, 11)));
}

TEST_CASE("SSIM is symmetric", "[metrics][property]") {
  const RMatrix a = test_image();
  for (std::uint64_t s = 0; s < 5; ++s) {
    const RMatrix b = add_noise(a, 0.05 * static_cast<double>(s + 1), s);
    CHECK(ssim(a, b) == Catch::Approx(ssim(b, a)).epsilon(1e-14));
  }
}

TEST_CASE("more noise means worse metrics", "[metrics][property]") {
  const RMatrix a = test_image();
  const RMatrix base = add_noise(RMatrix::Zero(a.rows(), a.cols()), 1.0, 99);
  double prev_n = -1.0, prev_s = 2.0, prev_p = kPsnrInfinity;
  for (double sigma : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    const RMatrix b = a + sigma * base;
    const double n = nmse(a, b), s = ssim(a, b), p = psnr(a, b);
    CHECK(n > prev_n);
    CHECK(s < prev_s);
    CHECK(p < prev_p);
    prev_n = n;
    prev_s = s;
    prev_p = p;
  }
}

TEST_CASE("metrics match the reference fixtures", "[metrics][fixture]") {
  std::ifstream is(std::string(SRSPEC_FIXTURE_DIR) + "/metrics_reference.json");
  REQUIRE(is);
  const auto j = nlohmann::json::parse(is);
  REQUIRE(j["pairs"].size() == 10);
  for (const auto& pair : j["pairs"]) {
    const auto rows = pair["rows"].get<std::size_t>(), cols = pair["cols"].get<std::size_t>();
    const RMatrix t = from_rows(pair["truth"].get<std::vector<double>>(), rows, cols);
    const RMatrix p = from_rows(pair["pred"].get<std::vector<double>>(), rows, cols);
    INFO("kind " << pair["kind"].get<std::string>());
    const double ref_n = pair["nmse"], ref_s = pair["ssim"], ref_p = pair["psnr_db"];
    CHECK(std::abs(nmse(t, p) - ref_n) <= 1e-6 * std::max(1.0, std::abs(ref_n)));
    CHECK(std::abs(ssim(t, p) - ref_s) <= 1e-6);
    CHECK(std::abs(psnr(t, p) - ref_p) <= 1e-6 * std::max(1.0, std::abs(ref_p)));
  }
}

TEST_CASE("aggregation", "[metrics]") {
  const auto r = aggregate({{"a", 1.0, 0.5, 10.0}, {"b", 3.0, 0.7, 20.0}, {"c", 2.0, 0.9, kPsnrInfinity}});
  CHECK(r.frames.size() == 3);
  CHECK(r.mean.nmse == 2.0);
  CHECK(r.median.nmse == 2.0);
  CHECK(r.median.ssim == 0.7);
  CHECK(r.median.psnr_db == 20.0);
  CHECK(r.mean.psnr_db == kPsnrInfinity);
  CHECK(median_of({4.0, 1.0, 3.0, 2.0}) == 2.5);
}
