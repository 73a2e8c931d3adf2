#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "raregrad/estimators.hpp"
#include "raregrad/mixture.hpp"

using namespace raregrad;
using core::EventLabel;
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

core::SampleBatch scalar_batch(const std::vector<std::pair<double, EventLabel>>& rows) {
  core::SampleBatch batch(1);
  for (const auto& [x, label] : rows) {
    const double v[1] = {x};
    batch.push_back(std::span<const double>(v, 1), label);
  }
  return batch;
}

}  // namespace

TEST_CASE("mu1 is the plain arithmetic mean") {
  const auto batch = scalar_batch({{1.0, EventLabel::Normal},
                                   {2.0, EventLabel::Critical},
                                   {3.0, EventLabel::Normal}});
  const auto est = core::estimate_mu1(batch);
  CHECK(est.mean[0] == Catch::Approx(2.0));
  CHECK(est.n == 3);
  CHECK(est.kind == core::EstimatorKind::Mu1);
  CHECK(est.sample_variance == Catch::Approx(1.0));  // Bessel over {1,2,3}
}

TEST_CASE("single-sample batch reports zero variance with the degenerate flag") {
  const auto batch = scalar_batch({{4.5, EventLabel::Critical}});
  const auto est = core::estimate_mu1(batch);
  CHECK(est.mean[0] == Catch::Approx(4.5));
  CHECK(est.sample_variance == 0.0);
  CHECK(est.degenerate);
}

TEST_CASE("empty batches are rejected") {
  core::SampleBatch batch(1);
  CHECK_THROWS_AS(core::estimate_mu1(batch), std::invalid_argument);
  CHECK_THROWS_AS(core::estimate_mu2(batch), std::invalid_argument);
  CHECK_THROWS_AS(core::check_assumption(batch), std::invalid_argument);
}

TEST_CASE("mu2 of an all-Normal batch is exactly zero") {
  std::vector<std::pair<double, EventLabel>> rows;
  for (int i = 0; i < 10; ++i) rows.emplace_back(1.0 + i, EventLabel::Normal);
  const auto est = core::estimate_mu2(scalar_batch(rows));
  CHECK(est.mean[0] == 0.0);
  CHECK(est.sample_variance == 0.0);
}

TEST_CASE("mu2 equals mu1 exactly when every sample is Critical") {
  MixtureSpec spec = canonical();
  spec.rho_b = 1.0;
  const auto batch = core::sample_mixture(spec, 1000, 3);
  const auto m1 = core::estimate_mu1(batch);
  const auto m2 = core::estimate_mu2(batch);
  CHECK(m1.mean == m2.mean);
  CHECK(m1.sample_variance == m2.sample_variance);
}

TEST_CASE("mu2 divides the Critical sum by the total batch size") {
  const auto batch = scalar_batch({{5.0, EventLabel::Critical},
                                   {7.0, EventLabel::Normal},
                                   {-2.0, EventLabel::Normal},
                                   {3.0, EventLabel::Critical}});
  const auto est = core::estimate_mu2(batch);
  CHECK(est.mean[0] == Catch::Approx((5.0 + 3.0) / 4.0));
  CHECK(est.n == 4);
  CHECK(est.kind == core::EstimatorKind::Mu2);
}

TEST_CASE("closed-form moments at the canonical spec") {
  const auto cf = core::closed_form_moments(canonical());
  CHECK(cf.mu[0] == Catch::Approx(0.01));
  CHECK(cf.var_mu1 == Catch::Approx(1.9999));
  CHECK(cf.var_mu2 == Catch::Approx(0.0199));
  CHECK(cf.ratio == Catch::Approx(1.9999 / 0.0199));
  CHECK(cf.ratio >= 100.0);
  CHECK(cf.snr_mu1 == Catch::Approx(1e-4 / 1.9999));
  CHECK(cf.snr_mu2 == Catch::Approx(1e-4 / 0.0199));
}

TEST_CASE("rho_b = 1 collapses the two variances") {
  MixtureSpec spec = canonical();
  spec.rho_b = 1.0;
  const auto cf = core::closed_form_moments(spec);
  CHECK(cf.var_mu1 == Catch::Approx(cf.var_mu2));
  CHECK(cf.ratio == Catch::Approx(1.0));
}

TEST_CASE("closed forms agree with a 10^7-sample Monte Carlo run") {
  const auto spec = canonical();
  const auto cf = core::closed_form_moments(spec);
  const std::size_t n = 10'000'000;
  const auto batch = core::sample_mixture(spec, n, 424242);
  const auto m1 = core::estimate_mu1(batch);
  const auto m2 = core::estimate_mu2(batch);
  const double se1 = std::sqrt(cf.var_mu1 / static_cast<double>(n));
  const double se2 = std::sqrt(cf.var_mu2 / static_cast<double>(n));
  CHECK(std::abs(m1.mean[0] - cf.mu[0]) < 4.0 * se1);
  CHECK(std::abs(m2.mean[0] - cf.mu[0]) < 4.0 * se2);
  CHECK(m1.sample_variance == Catch::Approx(cf.var_mu1).epsilon(0.005));
  CHECK(m2.sample_variance == Catch::Approx(cf.var_mu2).epsilon(0.03));
}

TEST_CASE("mixture mean matches rho * m over 10^5 draws") {
  const auto spec = canonical();
  const auto batch = core::sample_mixture(spec, 100'000, 11);
  const auto est = core::estimate_mu1(batch);
  const double se = std::sqrt(1.9999 / 1e5);
  CHECK(std::abs(est.mean[0] - 0.01) < 4.0 * se);
}

TEST_CASE("assumption residual is near zero exactly for satisfying specs") {
  const std::size_t n = 1'000'000;
  SECTION("satisfying: var_a = var_b + m^2") {
    const auto batch = core::sample_mixture(canonical(), n, 5);
    CHECK(core::check_assumption(batch) < 0.01);
  }
  SECTION("violating: var_a = 10") {
    MixtureSpec spec = canonical();
    spec.var_a = 10.0;
    const auto batch = core::sample_mixture(spec, n, 5);
    // analytic residual rho(1-rho)|var_b + m^2 - var_a| = 0.0099 * 8
    CHECK(core::check_assumption(batch) == Catch::Approx(0.0792).margin(0.005));
  }
}

TEST_CASE("all-Critical batch has zero assumption residual") {
  MixtureSpec spec = canonical();
  spec.rho_b = 1.0;
  const auto batch = core::sample_mixture(spec, 10'000, 17);
  CHECK(core::check_assumption(batch) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("snr") {
  const auto spec = canonical();
  const auto cf = core::closed_form_moments(spec);
  const auto batch = core::sample_mixture(spec, 1'000'000, 23);

  SECTION("zero true mean gives zero snr") {
    const std::vector<double> zero{0.0};
    CHECK(core::snr(core::estimate_mu1(batch), zero) == 0.0);
  }
  SECTION("matches closed-form snr for both estimators") {
    CHECK(core::snr(core::estimate_mu1(batch), cf.mu) == Catch::Approx(cf.snr_mu1).epsilon(0.02));
    CHECK(core::snr(core::estimate_mu2(batch), cf.mu) == Catch::Approx(cf.snr_mu2).epsilon(0.05));
  }
  SECTION("zero variance is rejected") {
    const auto one = scalar_batch({{1.0, EventLabel::Normal}});
    const std::vector<double> mu{1.0};
    CHECK_THROWS_AS(core::snr(core::estimate_mu1(one), mu), std::invalid_argument);
  }
  SECTION("dimension mismatch is rejected") {
    const std::vector<double> mu2d{1.0, 2.0};
    CHECK_THROWS_AS(core::snr(core::estimate_mu1(batch), mu2d), std::invalid_argument);
  }
}
