#pragma once

// Empirical verification of the filtered-estimator guarantees:
//   (1) both estimators are unbiased for mu,
//   (2) the filtered estimator never has larger variance,
//   (3) under second-moment independence of the Critical event the
//       variance shrinks by at least the factor rho_b.
//
// A run draws `trials` independent batches, evaluates both estimators per
// batch, and reduces across trials in trial-index order.  Trial t derives
// its stream from (seed, t), so a report replays bit-exactly for any jobs
// value.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "raregrad/estimators.hpp"
#include "raregrad/mixture.hpp"
#include "raregrad/parallel.hpp"
#include "raregrad/rng.hpp"

namespace raregrad::verify {

enum class Property : std::uint8_t {
  Unbiasedness,
  VarianceOrdering,
  RhoFactor,
  AssumptionResidual,
};

inline const char* property_name(Property p) {
  switch (p) {
    case Property::Unbiasedness: return "unbiasedness";
    case Property::VarianceOrdering: return "variance ordering";
    case Property::RhoFactor: return "rho factor";
    case Property::AssumptionResidual: return "assumption residual";
  }
  return "?";
}

// pass is always a pure function of (empirical, closed_form, tolerance);
// the layout of the two value vectors is fixed per property and documented
// on the producing operation.
struct VerificationReport {
  Property property = Property::Unbiasedness;
  core::MixtureSpec spec;
  std::size_t trials = 0;
  std::size_t batch_size = 0;
  std::vector<double> empirical;
  std::vector<double> closed_form;
  bool pass = false;
  double tolerance = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

struct TrialMeans {
  std::vector<double> mu1;
  std::vector<double> mu2;
};

inline std::vector<TrialMeans> run_trials(const core::MixtureSpec& spec, std::size_t batch_size,
                                          std::size_t trials, std::uint64_t seed,
                                          std::size_t jobs) {
  const rng::Stream root(seed);
  return parallel::map_indexed<TrialMeans>(trials, jobs, [&](std::size_t t) {
    const auto batch = core::sample_mixture(spec, batch_size, root.child(t));
    return TrialMeans{core::estimate_mu1(batch).mean, core::estimate_mu2(batch).mean};
  });
}

}  // namespace detail

// Property (1).  empirical = [grand mu1 coords..., grand mu2 coords...];
// closed_form = mu coords.  Pass iff every coordinate of both grand means
// lies within z standard errors of mu, with the standard error taken from
// the closed-form per-coordinate variances over trials*batch samples.
inline VerificationReport verify_unbiasedness(const core::MixtureSpec& spec,
                                              std::size_t batch_size, std::size_t trials,
                                              std::uint64_t seed, std::size_t jobs = 1,
                                              double z = 4.0) {
  spec.validate();
  if (trials < 100) throw std::invalid_argument("verify_unbiasedness: trials must be >= 100");
  if (batch_size < 2) throw std::invalid_argument("verify_unbiasedness: batch_size must be >= 2");

  const auto means = detail::run_trials(spec, batch_size, trials, seed, jobs);
  const std::size_t d = spec.dim();
  std::vector<double> grand1(d, 0.0), grand2(d, 0.0);
  for (const auto& m : means)
    for (std::size_t j = 0; j < d; ++j) {
      grand1[j] += m.mu1[j];
      grand2[j] += m.mu2[j];
    }
  for (std::size_t j = 0; j < d; ++j) {
    grand1[j] /= static_cast<double>(trials);
    grand2[j] /= static_cast<double>(trials);
  }

  const auto cf = core::closed_form_moments(spec);
  const double rho = spec.rho_b;
  const auto total = static_cast<double>(trials * batch_size);
  bool ok = true;
  for (std::size_t j = 0; j < d; ++j) {
    const double mj2 = spec.mean_b[j] * spec.mean_b[j];
    const double var2_j = rho * spec.var_b + rho * (1.0 - rho) * mj2;
    const double var1_j = var2_j + (1.0 - rho) * spec.var_a;
    const double se1 = std::sqrt(var1_j / total);
    const double se2 = std::sqrt(var2_j / total);
    ok = ok && std::abs(grand1[j] - cf.mu[j]) <= z * se1;
    ok = ok && std::abs(grand2[j] - cf.mu[j]) <= z * se2;
  }

  VerificationReport r;
  r.property = Property::Unbiasedness;
  r.spec = spec;
  r.trials = trials;
  r.batch_size = batch_size;
  r.empirical = grand1;
  r.empirical.insert(r.empirical.end(), grand2.begin(), grand2.end());
  r.closed_form = cf.mu;
  r.pass = ok;
  r.tolerance = z;
  r.seed = seed;
  return r;
}

// Property (2).  empirical = [Var^(mu1 means), Var^(mu2 means)] across
// trials (trace); closed_form = [var_mu1/batch, var_mu2/batch].  Pass iff
// Var^(mu2) <= Var^(mu1) * (1 + rel_tolerance) and each empirical variance
// is within rel_tolerance of its closed form.
inline VerificationReport verify_variance_ordering(const core::MixtureSpec& spec,
                                                   std::size_t batch_size, std::size_t trials,
                                                   std::uint64_t seed, std::size_t jobs = 1,
                                                   double rel_tolerance = 0.10) {
  spec.validate();
  if (trials < 100) throw std::invalid_argument("verify_variance_ordering: trials must be >= 100");
  if (batch_size < 2) throw std::invalid_argument("verify_variance_ordering: batch_size must be >= 2");

  const auto means = detail::run_trials(spec, batch_size, trials, seed, jobs);
  stats::VectorMoments acc1(spec.dim()), acc2(spec.dim());
  for (const auto& m : means) {
    acc1.add(m.mu1);
    acc2.add(m.mu2);
  }
  const double v1 = acc1.trace_variance();
  const double v2 = acc2.trace_variance();

  const auto cf = core::closed_form_moments(spec);
  const auto b = static_cast<double>(batch_size);
  const double cf1 = cf.var_mu1 / b;
  const double cf2 = cf.var_mu2 / b;

  bool ok = v2 <= v1 * (1.0 + rel_tolerance);
  ok = ok && std::abs(v1 - cf1) <= rel_tolerance * cf1;
  ok = ok && std::abs(v2 - cf2) <= rel_tolerance * cf2;

  VerificationReport r;
  r.property = Property::VarianceOrdering;
  r.spec = spec;
  r.trials = trials;
  r.batch_size = batch_size;
  r.empirical = {v1, v2};
  r.closed_form = {cf1, cf2};
  r.pass = ok;
  r.tolerance = rel_tolerance;
  r.seed = seed;
  return r;
}

// Property (3); requires an assumption-satisfying spec.  empirical =
// [Var^(mu1)/Var^(mu2) across trials]; closed_form = [var_mu1/var_mu2,
// 1/rho_b].  Pass iff the closed-form ratio is >= 1/rho_b and the
// empirical ratio is within rel_tolerance of the closed-form ratio.
inline VerificationReport verify_rho_factor(const core::MixtureSpec& spec, std::size_t batch_size,
                                            std::size_t trials, std::uint64_t seed,
                                            std::size_t jobs = 1, double rel_tolerance = 0.10) {
  spec.validate();
  if (!spec.assumption_satisfied())
    throw std::invalid_argument(
        "verify_rho_factor: spec must satisfy var_a == var_b + |mean_b|^2/dim "
        "(second-moment independence of the Critical event)");
  if (trials < 100) throw std::invalid_argument("verify_rho_factor: trials must be >= 100");
  if (batch_size < 2) throw std::invalid_argument("verify_rho_factor: batch_size must be >= 2");

  const auto means = detail::run_trials(spec, batch_size, trials, seed, jobs);
  stats::VectorMoments acc1(spec.dim()), acc2(spec.dim());
  for (const auto& m : means) {
    acc1.add(m.mu1);
    acc2.add(m.mu2);
  }
  const double v2 = acc2.trace_variance();
  const double empirical_ratio = v2 > 0.0 ? acc1.trace_variance() / v2 : 0.0;

  const auto cf = core::closed_form_moments(spec);
  const double inv_rho = 1.0 / spec.rho_b;
  bool ok = cf.ratio >= inv_rho * (1.0 - 1e-12);
  ok = ok && std::abs(empirical_ratio - cf.ratio) <= rel_tolerance * cf.ratio;

  VerificationReport r;
  r.property = Property::RhoFactor;
  r.spec = spec;
  r.trials = trials;
  r.batch_size = batch_size;
  r.empirical = {empirical_ratio};
  r.closed_form = {cf.ratio, inv_rho};
  r.pass = ok;
  r.tolerance = rel_tolerance;
  r.seed = seed;
  return r;
}

// Analytic value of the independence residual for the mixture:
// rho (1-rho) | d var_b + |m|^2 - d var_a |.
inline double closed_form_assumption_residual(const core::MixtureSpec& spec) {
  const auto d = static_cast<double>(spec.dim());
  return spec.rho_b * (1.0 - spec.rho_b) *
         std::abs(d * spec.var_b + spec.mean_b_norm2() - d * spec.var_a);
}

// empirical = [residual from one batch of `samples` draws]; closed_form =
// [analytic residual].  Pass iff |empirical - analytic| <= tolerance.
inline VerificationReport verify_assumption_residual(const core::MixtureSpec& spec,
                                                     std::size_t samples, std::uint64_t seed,
                                                     double tolerance = 0.01) {
  spec.validate();
  if (samples < 2) throw std::invalid_argument("verify_assumption_residual: samples must be >= 2");
  const auto batch = core::sample_mixture(spec, samples, rng::Stream(seed));
  const double residual = core::check_assumption(batch);
  const double analytic = closed_form_assumption_residual(spec);

  VerificationReport r;
  r.property = Property::AssumptionResidual;
  r.spec = spec;
  r.trials = 1;
  r.batch_size = samples;
  r.empirical = {residual};
  r.closed_form = {analytic};
  r.pass = std::abs(residual - analytic) <= tolerance;
  r.tolerance = tolerance;
  r.seed = seed;
  return r;
}

}  // namespace raregrad::verify
