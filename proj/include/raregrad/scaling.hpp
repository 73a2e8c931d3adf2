#pragma once

// Sample-complexity scaling laws.
//
// required_sample_size inverts the estimator variance into the batch size
// needed to pin the mean to a relative error at a confidence multiple.
// longtail_curve sweeps it over event rarity: as rho_b falls, the full
// estimator needs ~rho^-2 samples while the filtered one needs ~rho^-1.
// dimension_sweep measures the second moment of a Gaussian-shift
// importance-sampling likelihood ratio, which grows as exp(d * shift^2);
// past the point where the sweep's own budget can resolve it, points are
// flagged unreliable rather than dropped.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "raregrad/estimators.hpp"
#include "raregrad/mixture.hpp"
#include "raregrad/parallel.hpp"
#include "raregrad/rng.hpp"
#include "raregrad/stats.hpp"

namespace raregrad::verify {

struct ScalingCurve {
  std::vector<double> x_values;  // strictly increasing grid
  std::vector<double> y_values;
  double fitted_slope = 0.0;
  double fit_r2 = 0.0;
  bool slope_defined = false;
  // dimension_sweep only: closed-form relative SE of each point's w^2 mean
  // and whether the point's own budget can resolve it (rel SE <= 0.5).
  std::vector<double> rel_se;
  std::vector<std::uint8_t> reliable;
};

// Smallest n with z^2 * var_kind / n <= (relative_error * |mu|)^2.
inline std::uint64_t required_sample_size(const core::MixtureSpec& spec, double relative_error,
                                          double confidence_z, core::EstimatorKind kind) {
  spec.validate();
  if (!(relative_error > 0.0))
    throw std::invalid_argument("required_sample_size: relative_error must be positive");
  if (!(confidence_z > 0.0))
    throw std::invalid_argument("required_sample_size: confidence_z must be positive");
  const auto cf = core::closed_form_moments(spec);
  const double mu_norm = std::sqrt(stats::norm2(cf.mu));
  if (!(mu_norm > 0.0)) throw std::invalid_argument("required_sample_size: mu is zero");
  const double var = kind == core::EstimatorKind::Mu1 ? cf.var_mu1 : cf.var_mu2;
  const double target = relative_error * mu_norm;
  const double raw = confidence_z * confidence_z * var / (target * target);
  // one-ulp guard so exact-integer boundaries do not round up spuriously
  const double n = std::ceil(raw * (1.0 - 1e-12));
  return n < 1.0 ? 1 : static_cast<std::uint64_t>(n);
}

// One-dimensional assumption-satisfying spec at rarity rho with fixed
// Normal-component variance: m = 1, var_b = var_a - 1.
inline core::MixtureSpec longtail_spec(double rho, double var_a) {
  if (!(var_a >= 1.0))
    throw std::invalid_argument("longtail_spec: var_a must be >= 1 so that var_b >= 0");
  core::MixtureSpec spec;
  spec.rho_b = rho;
  spec.mean_b = {1.0};
  spec.var_a = var_a;
  spec.var_b = var_a - 1.0;
  return spec;
}

// Required n versus rho_b; the slope is fitted on log-log axes.
inline ScalingCurve longtail_curve(std::span<const double> rho_grid, double var_a,
                                   double relative_error, double confidence_z,
                                   core::EstimatorKind kind) {
  if (rho_grid.empty()) throw std::invalid_argument("longtail_curve: empty rho grid");
  for (std::size_t i = 0; i < rho_grid.size(); ++i) {
    if (!(rho_grid[i] > 0.0) || rho_grid[i] > 0.5)
      throw std::invalid_argument("longtail_curve: rho values must lie in (0, 0.5]");
    if (i > 0 && rho_grid[i] <= rho_grid[i - 1])
      throw std::invalid_argument("longtail_curve: rho grid must be strictly increasing");
  }
  ScalingCurve curve;
  curve.x_values.assign(rho_grid.begin(), rho_grid.end());
  curve.y_values.reserve(rho_grid.size());
  for (double rho : rho_grid) {
    const auto n = required_sample_size(longtail_spec(rho, var_a), relative_error, confidence_z, kind);
    curve.y_values.push_back(static_cast<double>(n));
  }
  if (rho_grid.size() >= 2) {
    std::vector<double> lx(rho_grid.size()), ly(rho_grid.size());
    for (std::size_t i = 0; i < rho_grid.size(); ++i) {
      lx[i] = std::log(curve.x_values[i]);
      ly[i] = std::log(curve.y_values[i]);
    }
    const auto fit = stats::fit_line(lx, ly);
    curve.fitted_slope = fit.slope;
    curve.fit_r2 = fit.r2;
    curve.slope_defined = true;
  }
  return curve;
}

// Closed-form E_q[w^2] for target N(0, I_d) and proposal N(shift * 1, I_d).
inline double likelihood_ratio_second_moment(int dim, double shift) noexcept {
  return std::exp(static_cast<double>(dim) * shift * shift);
}

// Closed-form relative SE of the w^2 sample mean at budget n_total:
// sqrt((exp(4 d a^2) - 1) / n_total).
inline double likelihood_ratio_rel_se(int dim, double shift, std::uint64_t n_total) noexcept {
  const double e4 = std::exp(4.0 * static_cast<double>(dim) * shift * shift);
  return std::sqrt((e4 - 1.0) / static_cast<double>(n_total));
}

// Estimates E_q[w^2] for each dimension in the grid, with w = p/q the
// likelihood ratio between a standard Gaussian and a per-coordinate
// shifted Gaussian proposal.  y = log of the grand w^2 mean over
// trials * n samples; the slope (expected shift^2) is fitted over the
// points whose closed-form rel SE is at most 0.5, and every point keeps
// its reliability flag.  Point d / trial t / sample i draws from stream
// child(d_index).child(t).child(i).
inline ScalingCurve dimension_sweep(std::span<const int> dim_grid, double shift_per_dim,
                                    std::size_t n, std::size_t trials, std::uint64_t seed,
                                    std::size_t jobs = 1) {
  if (dim_grid.empty()) throw std::invalid_argument("dimension_sweep: empty dimension grid");
  for (std::size_t i = 0; i < dim_grid.size(); ++i) {
    if (dim_grid[i] < 1) throw std::invalid_argument("dimension_sweep: dimensions must be >= 1");
    if (i > 0 && dim_grid[i] <= dim_grid[i - 1])
      throw std::invalid_argument("dimension_sweep: dimension grid must be strictly increasing");
  }
  if (!(shift_per_dim >= 0.0)) throw std::invalid_argument("dimension_sweep: shift must be >= 0");
  if (n == 0 || trials == 0)
    throw std::invalid_argument("dimension_sweep: n and trials must be positive");

  const rng::Stream root(seed);
  const double a = shift_per_dim;
  ScalingCurve curve;
  curve.x_values.reserve(dim_grid.size());
  curve.y_values.reserve(dim_grid.size());
  for (std::size_t pi = 0; pi < dim_grid.size(); ++pi) {
    const int d = dim_grid[pi];
    const rng::Stream point = root.child(pi);
    // log w = sum_j (a^2/2 - a x_j) with x_j ~ N(a, 1) under the proposal.
    const auto trial_sums = parallel::map_indexed<double>(trials, jobs, [&](std::size_t t) {
      const rng::Stream trial = point.child(t);
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const rng::Stream s = trial.child(i);
        double log_w = 0.5 * a * a * static_cast<double>(d) * 1.0;
        for (int j = 0; j < d; ++j) log_w -= a * (a + s.normal(0, static_cast<std::uint64_t>(j)));
        sum += std::exp(2.0 * log_w);
      }
      return sum;
    });
    double total = 0.0;
    for (double s : trial_sums) total += s;
    const auto n_total = static_cast<std::uint64_t>(n) * trials;
    const double mean_w2 = total / static_cast<double>(n_total);

    curve.x_values.push_back(static_cast<double>(d));
    curve.y_values.push_back(std::log(mean_w2));
    const double rse = likelihood_ratio_rel_se(d, a, n_total);
    curve.rel_se.push_back(rse);
    curve.reliable.push_back(rse <= 0.5 ? 1 : 0);
  }

  std::vector<double> fx, fy;
  for (std::size_t i = 0; i < curve.x_values.size(); ++i) {
    if (curve.reliable[i]) {
      fx.push_back(curve.x_values[i]);
      fy.push_back(curve.y_values[i]);
    }
  }
  if (fx.size() >= 2) {
    const auto fit = stats::fit_line(fx, fy);
    curve.fitted_slope = fit.slope;
    curve.fit_r2 = fit.r2;
    curve.slope_defined = true;
  }
  return curve;
}

}  // namespace raregrad::verify
