#include <cmath>
#include <random>

#include "doctest.h"

#include "bsa/embedding.hpp"
#include "test_support.hpp"

using bsa::NormMode;
using bsa::PatchGeometry;

TEST_CASE("embed_pixel") {
  CHECK(bsa::embed_pixel(1.0).isApprox(Eigen::Vector2d(1, 0)));
  CHECK(bsa::embed_pixel(0.0).isApprox(Eigen::Vector2d(0, 1)));
  const Eigen::Vector2d half = bsa::embed_pixel(0.5);
  CHECK(half[0] == doctest::Approx(0.70711).epsilon(1e-5));
  CHECK(half[1] == doctest::Approx(0.70711).epsilon(1e-5));
  for (double p = 0.0; p <= 1.0; p += 0.05) {
    const Eigen::Vector2d v = bsa::embed_pixel(p);
    CHECK(v.norm() == doctest::Approx(1.0));
    CHECK(v.minCoeff() >= 0.0);
  }
  // out-of-range input is clamped
  CHECK(bsa::embed_pixel(1.5).isApprox(Eigen::Vector2d(1, 0)));
}

TEST_CASE("invert_pixel") {
  CHECK(bsa::invert_pixel({1.0, 0.0}) == 1.0);
  CHECK(bsa::invert_pixel({0.70711, 0.70711}) == doctest::Approx(0.5));
  CHECK(bsa::invert_pixel({0.6, 0.8}) == doctest::Approx(0.42857).epsilon(1e-5));
  CHECK(bsa::invert_pixel({0.3, -0.3}) == 0.5);
  CHECK(bsa::invert_pixel({2.0, -1.0}) == 1.0);
  for (double p = 0.0; p <= 1.0; p += 0.01) {
    CHECK(bsa::invert_pixel(bsa::embed_pixel(p)) == doctest::Approx(p).epsilon(1e-12));
  }
}

TEST_CASE("PatchGeometry") {
  const auto g = PatchGeometry::make(28, 28, 2);
  CHECK(g.a == 4);
  CHECK(g.n == 196);
  CHECK(g.d == 8);
  CHECK(PatchGeometry::make(28, 28, 4).d == 32);
  CHECK(PatchGeometry::make(28, 28, 4, 40).d == 40);
  CHECK_THROWS_AS(PatchGeometry::make(28, 28, 3), std::invalid_argument);
  CHECK_THROWS_AS(PatchGeometry::make(28, 28, 2, 7), std::invalid_argument);
}

TEST_CASE("build_embedding invariants") {
  for (const int side : {1, 2, 4}) {
    for (const int extra : {0, 3}) {
      const auto g = PatchGeometry::make(28, 28, side, 2 * side * side + extra);
      for (std::uint64_t seed : {1u, 2u, 99u}) {
        const auto map = bsa::build_embedding(seed, g);
        const int k = 2 * g.a;
        REQUIRE(map.f.rows() == g.d);
        REQUIRE(map.f.cols() == k);
        const Eigen::MatrixXd gram = g.a * map.f.transpose() * map.f;
        CHECK((gram - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((map.f_pinv * map.f - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() <
              1e-10);
        for (int c = 0; c < k; ++c) {
          CHECK(std::abs(map.f.col(c).norm() - 1.0 / std::sqrt(g.a)) < 1e-10);
        }
      }
    }
  }
}

TEST_CASE("square embedding is orthogonal up to the patch scale") {
  const auto g = PatchGeometry::make(4, 4, 2);
  const auto map = bsa::build_embedding(5, g);
  const Eigen::MatrixXd q = std::sqrt(static_cast<double>(g.a)) * map.f;
  CHECK((q * q.transpose() - Eigen::MatrixXd::Identity(g.d, g.d)).cwiseAbs().maxCoeff() <
        1e-10);
  CHECK((bsa::build_embedding(6, g).f - map.f).norm() > 0.0);
  CHECK(bsa::build_embedding(5, g).f == map.f);
  CHECK_THROWS_AS(bsa::build_embedding(1, PatchGeometry{4, 4, 2, 4, 4, 6}),
                  std::invalid_argument);
}

TEST_CASE("embed_image / deembed_image") {
  const auto g = PatchGeometry::make(28, 28, 2);
  const auto map = bsa::build_embedding(3, g);

  SUBCASE("uniform image gives identical spins") {
    const bsa::Image flat = bsa::Image::Constant(28, 28, 0.5);
    const auto x = bsa::embed_image(flat, map, g);
    CHECK(x.cols() == 196);
    for (int i = 1; i < g.n; ++i) CHECK(x.col(i) == x.col(0));
  }

  SUBCASE("unit norms and round trip on random images") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
      bsa::Image im(28, 28);
      for (Eigen::Index k = 0; k < im.size(); ++k) im.data()[k] = u(rng);
      if (trial % 3 == 0) im = (im.array() > 0.5).cast<double>();
      const auto x = bsa::embed_image(im, map, g);
      for (int i = 0; i < g.n; ++i) CHECK(std::abs(x.col(i).norm() - 1.0) < 1e-6);
      const auto back = bsa::deembed_image(x, map, g);
      CHECK((back - im).cwiseAbs().maxCoeff() < 1e-6);
    }
  }

  SUBCASE("patch ordering is row-major") {
    bsa::Image im = bsa::Image::Zero(28, 28);
    im(0, 3) = 1.0;  // token 1, pixel 1
    const auto x = bsa::embed_image(im, map, g);
    const Eigen::VectorXd s = map.f_pinv * x.col(1);
    CHECK(bsa::invert_pixel(s.segment<2>(2)) == doctest::Approx(1.0));
    CHECK(bsa::invert_pixel(s.segment<2>(0)) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(bsa::patch_pixels(im, g, 1)[1] == 1.0);
  }

  SUBCASE("degenerate and arbitrary spins stay in range") {
    const auto zeros = bsa::deembed_image(bsa::SpinSequence::Zero(g.d, g.n), map, g);
    CHECK((zeros.array() == 0.5).all());
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
      const auto im = bsa::deembed_image(bsa::test::random_spins(rng, g.d, g.n), map, g);
      CHECK(im.minCoeff() >= 0.0);
      CHECK(im.maxCoeff() <= 1.0);
    }
  }

  CHECK_THROWS_AS(bsa::embed_image(bsa::Image::Zero(27, 28), map, g), std::invalid_argument);
  CHECK_THROWS_AS(bsa::deembed_image(bsa::SpinSequence::Zero(g.d, 3), map, g),
                  std::invalid_argument);
}

TEST_CASE("normalize_spin") {
  Eigen::VectorXd u(4);
  u << 0.5, -0.5, 0.5, 0.5;
  CHECK(bsa::normalize_spin(u, NormMode::kL2).isApprox(u, 1e-15));
  CHECK(bsa::normalize_spin(2.0 * u, NormMode::kL2).isApprox(u, 1e-15));

  std::mt19937_64 rng(4);
  std::normal_distribution<double> gauss(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd v(7);
    for (auto& c : v) c = gauss(rng);
    for (const NormMode mode : {NormMode::kL2, NormMode::kLayerNorm}) {
      const Eigen::VectorXd once = bsa::normalize_spin(v, mode);
      const Eigen::VectorXd twice = bsa::normalize_spin(once, mode);
      CHECK(std::abs(once.norm() - 1.0) < 1e-6);
      CHECK((once - twice).cwiseAbs().maxCoeff() < 1e-12);
      if (mode == NormMode::kLayerNorm) CHECK(std::abs(once.mean()) < 1e-6);
    }
  }

  CHECK_THROWS_AS(bsa::normalize_spin(Eigen::VectorXd::Zero(3), NormMode::kL2),
                  bsa::DegenerateSpinError);
  CHECK_THROWS_AS(bsa::normalize_spin(Eigen::VectorXd::Constant(3, 2.0), NormMode::kLayerNorm),
                  bsa::DegenerateSpinError);
  CHECK(bsa::parse_norm_mode("ln") == NormMode::kLayerNorm);
  CHECK_THROWS(bsa::parse_norm_mode("batch"));
}
