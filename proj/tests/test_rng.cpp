#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "raregrad/parallel.hpp"
#include "raregrad/rng.hpp"
#include "raregrad/stats.hpp"

using namespace raregrad;

TEST_CASE("draws are pure functions of (key, index)") {
  const rng::Stream s(12345);
  const rng::Stream t(12345);
  for (std::uint64_t i : {0ull, 1ull, 2ull, 1000ull, (1ull << 40)}) {
    CHECK(s.bits(i) == t.bits(i));
    CHECK(s.uniform(i) == t.uniform(i));
  }
  CHECK(rng::Stream(1).bits(0) != rng::Stream(2).bits(0));
}

TEST_CASE("child streams do not collide with the parent or siblings") {
  const rng::Stream root(77);
  const auto a = root.child(0);
  const auto b = root.child(1);
  CHECK(a.key() != b.key());
  CHECK(a.key() != root.key());
  CHECK(a.bits(0) != b.bits(0));
}

TEST_CASE("uniforms land in [0,1) and uniform_open in (0,1]") {
  const rng::Stream s(9);
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const double u = s.uniform(i);
    const double v = s.uniform_open(i);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    REQUIRE(v > 0.0);
    REQUIRE(v <= 1.0);
  }
}

TEST_CASE("normal draws match N(0,1) moments") {
  const rng::Stream s(31337);
  stats::OnlineMoments acc;
  const std::size_t n = 2'000'000;
  for (std::size_t i = 0; i < n; ++i) acc.add(s.normal(0, i));
  // mean ~ N(0, 1/n): 4 sigma band
  CHECK(std::abs(acc.mean()) < 4.0 / std::sqrt(static_cast<double>(n)));
  // variance estimate has sd ~ sqrt(2/n)
  CHECK(std::abs(acc.variance() - 1.0) < 4.0 * std::sqrt(2.0 / static_cast<double>(n)));
}

TEST_CASE("uniform mean and variance are sane") {
  const rng::Stream s(4242);
  stats::OnlineMoments acc;
  const std::size_t n = 1'000'000;
  for (std::size_t i = 0; i < n; ++i) acc.add(s.uniform(i));
  CHECK(std::abs(acc.mean() - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / static_cast<double>(n)));
  CHECK(std::abs(acc.variance() - 1.0 / 12.0) < 0.001);
}

TEST_CASE("map_indexed returns identical results for any jobs count") {
  auto fn = [](std::size_t i) { return rng::Stream(99).child(i).uniform(3); };
  const auto serial = parallel::map_indexed<double>(1000, 1, fn);
  const auto par2 = parallel::map_indexed<double>(1000, 2, fn);
  const auto par7 = parallel::map_indexed<double>(1000, 7, fn);
  CHECK(serial == par2);
  CHECK(serial == par7);
}

TEST_CASE("map_indexed propagates exceptions") {
  auto boom = [](std::size_t i) -> int {
    if (i == 5) throw std::runtime_error("boom");
    return static_cast<int>(i);
  };
  CHECK_THROWS_AS(parallel::map_indexed<int>(10, 3, boom), std::runtime_error);
}
