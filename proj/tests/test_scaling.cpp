#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "raregrad/scaling.hpp"

using namespace raregrad;
using core::EstimatorKind;
using core::MixtureSpec;

namespace {
MixtureSpec canonical() {
  MixtureSpec spec;
  spec.rho_b = 0.01;
  spec.mean_b = {1.0};
  spec.var_a = 2.0;
  spec.var_b = 1.0;
  return spec;
}
}  // namespace

TEST_CASE("required sample size at the canonical spec") {
  const auto spec = canonical();
  CHECK(verify::required_sample_size(spec, 0.1, 2.0, EstimatorKind::Mu1) == 7999600);
  CHECK(verify::required_sample_size(spec, 0.1, 2.0, EstimatorKind::Mu2) == 79600);
}

TEST_CASE("required sample size clamps to at least one") {
  MixtureSpec spec = canonical();
  spec.rho_b = 1.0;
  spec.var_a = 0.0;
  spec.var_b = 1e-6;
  CHECK(verify::required_sample_size(spec, 1.0, 1.0, EstimatorKind::Mu1) >= 1);
}

TEST_CASE("required sample size is monotone") {
  const auto spec = canonical();
  // nonincreasing in the relative error
  std::uint64_t prev = verify::required_sample_size(spec, 0.01, 2.0, EstimatorKind::Mu1);
  for (double eps : {0.02, 0.05, 0.1, 0.2, 0.5}) {
    const auto n = verify::required_sample_size(spec, eps, 2.0, EstimatorKind::Mu1);
    CHECK(n <= prev);
    prev = n;
  }
  // increasing as rho_b decreases, var_a fixed
  std::uint64_t smaller_rho_n = 0;
  for (double rho : {0.2, 0.1, 0.05, 0.01, 0.001}) {
    const auto n =
        verify::required_sample_size(verify::longtail_spec(rho, 2.0), 0.1, 2.0, EstimatorKind::Mu1);
    CHECK(n > smaller_rho_n);
    smaller_rho_n = n;
  }
}

TEST_CASE("a batch of the required size attains the target relative error") {
  // At z = 2 the normal approximation puts ~95.4% of batches within the
  // target; check the hit rate over 300 independent batches.
  const auto spec = canonical();
  const auto n = verify::required_sample_size(spec, 0.1, 2.0, EstimatorKind::Mu2);
  REQUIRE(n == 79600);
  const auto cf = core::closed_form_moments(spec);
  const rng::Stream root(2718);
  std::size_t hits = 0;
  const std::size_t reps = 300;
  for (std::size_t t = 0; t < reps; ++t) {
    const auto batch = core::sample_mixture(spec, n, root.child(t));
    const auto est = core::estimate_mu2(batch);
    if (std::abs(est.mean[0] - cf.mu[0]) <= 0.1 * std::abs(cf.mu[0])) ++hits;
  }
  const double rate = static_cast<double>(hits) / static_cast<double>(reps);
  // binomial 4-sigma band around 0.9545
  CHECK(rate > 0.9545 - 4.0 * std::sqrt(0.9545 * 0.0455 / reps));
}

TEST_CASE("longtail slopes follow the closed-form scaling") {
  std::vector<double> grid;
  for (int k = 0; k < 13; ++k) grid.push_back(std::pow(10.0, -4.0 + 0.25 * k));  // 1e-4 .. 1e-1
  const auto mu1 = verify::longtail_curve(grid, 2.0, 0.1, 2.0, EstimatorKind::Mu1);
  const auto mu2 = verify::longtail_curve(grid, 2.0, 0.1, 2.0, EstimatorKind::Mu2);
  REQUIRE(mu1.slope_defined);
  REQUIRE(mu2.slope_defined);
  CHECK(mu1.fitted_slope == Catch::Approx(-2.0).margin(0.02));
  CHECK(mu2.fitted_slope == Catch::Approx(-1.0).margin(0.02));
  CHECK(mu1.fit_r2 > 0.999);
  CHECK(mu2.fit_r2 > 0.999);
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(mu1.y_values[i] < mu1.y_values[i - 1]);
}

TEST_CASE("single-point longtail grid emits a curve without a slope") {
  const double one[] = {0.01};
  const auto curve = verify::longtail_curve(std::span<const double>(one, 1), 2.0, 0.1, 2.0,
                                            EstimatorKind::Mu1);
  CHECK_FALSE(curve.slope_defined);
  CHECK(curve.y_values.size() == 1);
}

TEST_CASE("longtail grid validation") {
  const std::vector<double> bad{0.1, 0.01};  // decreasing
  CHECK_THROWS_AS(verify::longtail_curve(bad, 2.0, 0.1, 2.0, EstimatorKind::Mu1),
                  std::invalid_argument);
  const std::vector<double> out{0.1, 0.7};  // above 0.5
  CHECK_THROWS_AS(verify::longtail_curve(out, 2.0, 0.1, 2.0, EstimatorKind::Mu1),
                  std::invalid_argument);
  CHECK_THROWS_AS(verify::longtail_curve({}, 2.0, 0.1, 2.0, EstimatorKind::Mu1),
                  std::invalid_argument);
  CHECK_THROWS_AS(verify::longtail_spec(0.01, 0.5), std::invalid_argument);  // var_a < 1
}

TEST_CASE("zero shift gives w identically one") {
  const std::vector<int> dims{1, 2, 4};
  const auto curve = verify::dimension_sweep(dims, 0.0, 1000, 2, 9);
  for (double y : curve.y_values) CHECK(y == 0.0);  // log E[w^2] = 0 exactly
  REQUIRE(curve.slope_defined);
  CHECK(curve.fitted_slope == 0.0);
  for (auto r : curve.reliable) CHECK(r == 1);
}

TEST_CASE("E[w^2] = e at d = 1, shift = 1") {
  const std::vector<int> dims{1};
  const auto curve = verify::dimension_sweep(dims, 1.0, 100000, 2, 42);
  const double w2 = std::exp(curve.y_values[0]);
  const double rel_se = verify::likelihood_ratio_rel_se(1, 1.0, 200000);
  CHECK(std::abs(w2 - std::exp(1.0)) < 4.0 * std::exp(1.0) * rel_se);
}

TEST_CASE("log E[w^2] grows linearly with dimension at slope shift^2") {
  const std::vector<int> dims{1, 2, 4, 8, 16};
  const auto curve = verify::dimension_sweep(dims, 0.5, 100000, 2, 31337, 2);
  REQUIRE(curve.slope_defined);
  CHECK(curve.fitted_slope == Catch::Approx(0.25).margin(0.05));
  CHECK(curve.fit_r2 >= 0.9);
  // nondecreasing log-variance in d
  for (std::size_t i = 1; i < curve.y_values.size(); ++i)
    CHECK(curve.y_values[i] > curve.y_values[i - 1]);
  // budget of 2e5: points with closed-form rel SE above 50% are flagged
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const bool expect = verify::likelihood_ratio_rel_se(dims[i], 0.5, 200000) <= 0.5;
    CHECK(curve.reliable[i] == (expect ? 1 : 0));
  }
  CHECK(curve.reliable.back() == 0);  // d = 16 exceeds this budget
}

TEST_CASE("dimension sweep validation") {
  const std::vector<int> dims{1, 2};
  CHECK_THROWS_AS(verify::dimension_sweep(dims, 0.5, 0, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(verify::dimension_sweep(dims, 0.5, 10, 0, 1), std::invalid_argument);
  const std::vector<int> bad{2, 1};
  CHECK_THROWS_AS(verify::dimension_sweep(bad, 0.5, 10, 1, 1), std::invalid_argument);
}

TEST_CASE("dimension sweep is jobs-independent") {
  const std::vector<int> dims{1, 3, 5};
  const auto a = verify::dimension_sweep(dims, 0.5, 20000, 4, 77, 1);
  const auto b = verify::dimension_sweep(dims, 0.5, 20000, 4, 77, 3);
  CHECK(a.y_values == b.y_values);
  CHECK(a.fitted_slope == b.fitted_slope);
}
