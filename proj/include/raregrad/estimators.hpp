#pragma once

// The two Monte Carlo gradient estimators over labeled batches.
//
//   mu1: arithmetic mean of every sample.
//   mu2: mean of Critical samples only, but still divided by the total
//        batch size n.  Normal samples contribute zero to the sum and one
//        to the divisor; dividing by the Critical count instead would
//        estimate the conditional mean, which is a different (and here
//        wrong) quantity.
//
// Variances are per-coordinate Bessel-corrected sample variances of the
// per-sample contributions, aggregated by trace (sum over coordinates).
// SNR is |mu|^2 over the trace variance.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "raregrad/mixture.hpp"
#include "raregrad/stats.hpp"

namespace raregrad::core {

enum class EstimatorKind : std::uint8_t { Mu1, Mu2 };

struct GradientEstimate {
  std::vector<double> mean;
  double sample_variance = 0.0;  // trace over coordinates, Bessel-corrected
  std::size_t n = 0;
  EstimatorKind kind = EstimatorKind::Mu1;
  bool degenerate = false;  // n == 1: variance reported as 0 by convention
};

// Closed-form moments of the mixture, trace convention.  Per coordinate j:
//   E[X_j]            = rho * m_j
//   Var[X_j]          = (1-rho) va + rho vb + rho(1-rho) m_j^2
//   Var[X_j * 1{B}]   =              rho vb + rho(1-rho) m_j^2
// summed over j below.
struct ClosedFormMoments {
  std::vector<double> mu;
  double var_mu1 = 0.0;
  double var_mu2 = 0.0;
  double snr_mu1 = 0.0;
  double snr_mu2 = 0.0;
  double ratio = 1.0;  // var_mu1 / var_mu2
};

inline ClosedFormMoments closed_form_moments(const MixtureSpec& spec) {
  spec.validate();
  const double rho = spec.rho_b;
  const auto d = static_cast<double>(spec.dim());
  const double m2 = spec.mean_b_norm2();

  ClosedFormMoments cf;
  cf.mu.resize(spec.dim());
  for (std::size_t j = 0; j < spec.dim(); ++j) cf.mu[j] = rho * spec.mean_b[j];
  cf.var_mu2 = d * rho * spec.var_b + rho * (1.0 - rho) * m2;
  cf.var_mu1 = cf.var_mu2 + d * (1.0 - rho) * spec.var_a;
  const double mu2 = stats::norm2(cf.mu);
  cf.snr_mu1 = cf.var_mu1 > 0.0 ? mu2 / cf.var_mu1 : 0.0;
  cf.snr_mu2 = cf.var_mu2 > 0.0 ? mu2 / cf.var_mu2 : 0.0;
  cf.ratio = cf.var_mu2 > 0.0 ? cf.var_mu1 / cf.var_mu2 : 1.0;
  return cf;
}

namespace detail {

template <typename ContributionFn>
GradientEstimate estimate_impl(const SampleBatch& batch, EstimatorKind kind, ContributionFn&& weight) {
  if (batch.empty()) throw std::invalid_argument("estimate: batch must not be empty");
  stats::VectorMoments acc(batch.dim());
  std::vector<double> c(batch.dim());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double w = weight(batch.label(i));
    const auto x = batch.value(i);
    for (std::size_t j = 0; j < c.size(); ++j) c[j] = w * x[j];
    acc.add(c);
  }
  GradientEstimate est;
  est.mean = acc.mean();
  est.sample_variance = acc.trace_variance();
  est.n = batch.size();
  est.kind = kind;
  est.degenerate = batch.size() == 1;
  return est;
}

}  // namespace detail

inline GradientEstimate estimate_mu1(const SampleBatch& batch) {
  return detail::estimate_impl(batch, EstimatorKind::Mu1, [](EventLabel) { return 1.0; });
}

inline GradientEstimate estimate_mu2(const SampleBatch& batch) {
  return detail::estimate_impl(batch, EstimatorKind::Mu2, [](EventLabel l) {
    return l == EventLabel::Critical ? 1.0 : 0.0;
  });
}

// Empirical second-moment independence residual, trace-aggregated:
// | E^[|X|^2 1{B}] - E^[|X|^2] E^[1{B}] |.  Near zero exactly when the
// batch comes from an assumption-satisfying spec.
inline double check_assumption(const SampleBatch& batch) {
  if (batch.empty()) throw std::invalid_argument("check_assumption: batch must not be empty");
  double sum_sq = 0.0, sum_sq_b = 0.0;
  std::size_t n_b = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double q = stats::norm2(batch.value(i));
    sum_sq += q;
    if (batch.label(i) == EventLabel::Critical) {
      sum_sq_b += q;
      ++n_b;
    }
  }
  const auto n = static_cast<double>(batch.size());
  return std::abs(sum_sq_b / n - (sum_sq / n) * (static_cast<double>(n_b) / n));
}

// |true_mu|^2 / sample_variance of the estimate.
inline double snr(const GradientEstimate& estimate, std::span<const double> true_mu) {
  if (estimate.mean.size() != true_mu.size())
    throw std::invalid_argument("snr: dimension mismatch");
  if (!(estimate.sample_variance > 0.0))
    throw std::invalid_argument("snr: degenerate batch, sample variance is zero");
  return stats::norm2(true_mu) / estimate.sample_variance;
}

}  // namespace raregrad::core
