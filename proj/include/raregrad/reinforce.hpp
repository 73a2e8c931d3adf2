#pragma once

// Score-function policy gradients over car-following episodes.
//
// Per-episode contribution to the gradient of the expected return:
//
//   X = (G - baseline) * sum_t grad log pi(a_t|s_t)
//       + effort_coeff * sum_t grad p(s_t)
//
// The second term is the pathwise derivative of the centered control-effort
// reward, which depends on the policy parameters directly; with it the
// estimator matches the finite-difference gradient of the expected return,
// and no-conflict episodes have exactly zero expected contribution for any
// baseline while keeping positive variance.
//
// Modes mirror the labeled-sample estimators: Full averages every episode,
// FilteredEpisode zeroes Normal episodes but keeps the total batch size as
// divisor, FilteredWindow additionally zeroes per-step terms outside the
// critical window of each Critical episode.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "raregrad/driving.hpp"
#include "raregrad/estimators.hpp"
#include "raregrad/parallel.hpp"
#include "raregrad/rng.hpp"
#include "raregrad/stats.hpp"

namespace raregrad::rl {

using sim::Vec3;

enum class GradientMode : std::uint8_t { Full, FilteredEpisode, FilteredWindow };

inline const char* mode_name(GradientMode m) {
  switch (m) {
    case GradientMode::Full: return "full";
    case GradientMode::FilteredEpisode: return "filtered-episode";
    case GradientMode::FilteredWindow: return "filtered-window";
  }
  return "?";
}

// Baseline-independent per-episode sums.
struct EpisodeGradient {
  Vec3 score_sum{};
  Vec3 dprob_sum{};
  Vec3 score_window{};
  Vec3 dprob_window{};
  double total_return = 0.0;
  sim::Outcome outcome = sim::Outcome::Uneventful;
  bool critical = false;
};

inline EpisodeGradient episode_gradient(const sim::Trajectory& traj) {
  EpisodeGradient eg;
  eg.total_return = traj.total_return;
  eg.outcome = traj.outcome;
  eg.critical = traj.outcome != sim::Outcome::Uneventful;
  const int first = traj.critical_window ? traj.critical_window->first : 0;
  const int last = traj.critical_window ? traj.critical_window->last : -1;
  for (int t = 0; t < static_cast<int>(traj.steps.size()); ++t) {
    const auto& s = traj.steps[t];
    const bool in_window = t >= first && t <= last;
    for (std::size_t j = 0; j < 3; ++j) {
      eg.score_sum[j] += s.score[j];
      eg.dprob_sum[j] += s.dprob[j];
      if (in_window) {
        eg.score_window[j] += s.score[j];
        eg.dprob_window[j] += s.dprob[j];
      }
    }
  }
  return eg;
}

inline Vec3 episode_contribution(const EpisodeGradient& eg, double baseline, GradientMode mode,
                                 double effort_coeff) {
  Vec3 x{0.0, 0.0, 0.0};
  if (mode != GradientMode::Full && !eg.critical) return x;
  const bool windowed = mode == GradientMode::FilteredWindow && eg.critical;
  const Vec3& score = windowed ? eg.score_window : eg.score_sum;
  const Vec3& dprob = windowed ? eg.dprob_window : eg.dprob_sum;
  const double advantage = eg.total_return - baseline;
  for (std::size_t j = 0; j < 3; ++j) x[j] = advantage * score[j] + effort_coeff * dprob[j];
  return x;
}

// Batch estimate over completed trajectories.  The policy argument enforces
// the on-policy contract: stored per-step probabilities must come from it.
inline core::GradientEstimate reinforce_gradient(const sim::EnvConfig& cfg,
                                                 std::span<const sim::Trajectory> batch,
                                                 const sim::PolicyParams& policy, double baseline,
                                                 GradientMode mode) {
  if (batch.empty()) throw std::invalid_argument("reinforce_gradient: batch must not be empty");
  for (const auto& traj : batch) {
    if (traj.steps.empty()) throw std::invalid_argument("reinforce_gradient: empty trajectory");
    const auto& s0 = traj.steps.front();
    const double closing0 = cfg.init_speed - cfg.init_speed;  // both start at init_speed
    const double p0 =
        sim::brake_probability(policy, sim::policy_features(cfg, cfg.init_gap, closing0));
    if (std::abs(s0.brake_prob - p0) > 1e-12)
      throw std::invalid_argument("reinforce_gradient: trajectory was not generated by this policy");
  }
  stats::VectorMoments acc(3);
  for (const auto& traj : batch) {
    const auto x = episode_contribution(episode_gradient(traj), baseline, mode, cfg.effort_coeff);
    acc.add(x);
  }
  core::GradientEstimate est;
  est.mean = acc.mean();
  est.sample_variance = acc.trace_variance();
  est.n = batch.size();
  est.kind = mode == GradientMode::Full ? core::EstimatorKind::Mu1 : core::EstimatorKind::Mu2;
  est.degenerate = batch.size() == 1;
  return est;
}

namespace detail {

// Rolls one episode and reduces it immediately; avoids retaining steps.
inline EpisodeGradient rollout_gradient(const sim::EnvConfig& cfg, const sim::PolicyParams& policy,
                                        rng::Stream stream) {
  return episode_gradient(sim::run_episode(cfg, policy, stream));
}

}  // namespace detail

// Rolls a fresh batch (episode i from stream child(i)) and reduces it to a
// single estimate without retaining trajectories.
inline core::GradientEstimate reinforce_batch_gradient(const sim::EnvConfig& cfg,
                                                       const sim::PolicyParams& policy,
                                                       double baseline, GradientMode mode,
                                                       std::size_t episodes, std::uint64_t seed,
                                                       std::size_t jobs = 1) {
  cfg.validate();
  if (episodes == 0) throw std::invalid_argument("reinforce_batch_gradient: episodes must be positive");
  const rng::Stream root(seed);
  const auto grads = parallel::map_indexed<EpisodeGradient>(episodes, jobs, [&](std::size_t i) {
    return detail::rollout_gradient(cfg, policy, root.child(i));
  });
  stats::VectorMoments acc(3);
  for (const auto& eg : grads)
    acc.add(episode_contribution(eg, baseline, mode, cfg.effort_coeff));
  core::GradientEstimate est;
  est.mean = acc.mean();
  est.sample_variance = acc.trace_variance();
  est.n = episodes;
  est.kind = mode == GradientMode::Full ? core::EstimatorKind::Mu1 : core::EstimatorKind::Mu2;
  est.degenerate = episodes == 1;
  return est;
}

// Central differences of the mean return per coordinate, with common random
// numbers: episode i replays the same stream for every perturbed policy.
inline Vec3 finite_difference_gradient(const sim::EnvConfig& cfg, const sim::PolicyParams& policy,
                                       double epsilon, std::size_t episodes, std::uint64_t seed,
                                       std::size_t jobs = 1) {
  cfg.validate();
  if (!(epsilon > 0.0)) throw std::invalid_argument("finite_difference_gradient: epsilon must be positive");
  if (episodes == 0) throw std::invalid_argument("finite_difference_gradient: episodes must be positive");
  const rng::Stream root(seed);
  const auto mean_return = [&](const sim::PolicyParams& p) {
    const auto returns = parallel::map_indexed<double>(episodes, jobs, [&](std::size_t i) {
      return sim::run_episode(cfg, p, root.child(i)).total_return;
    });
    double sum = 0.0;
    for (double r : returns) sum += r;
    return sum / static_cast<double>(episodes);
  };
  Vec3 grad{};
  for (std::size_t j = 0; j < 3; ++j) {
    sim::PolicyParams hi = policy, lo = policy;
    hi.theta[j] += epsilon;
    lo.theta[j] -= epsilon;
    grad[j] = (mean_return(hi) - mean_return(lo)) / (2.0 * epsilon);
  }
  return grad;
}

// Full vs FilteredEpisode comparison across independent batches.
struct GradientComparison {
  std::size_t batch = 0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  double rho_hat = 0.0;  // empirical Critical fraction over all episodes
  std::array<double, 3> mean_full{};
  std::array<double, 3> mean_filtered{};
  std::array<double, 3> diff_se{};  // per-coordinate SE of the paired mean difference
  double var_full = 0.0;            // trace variance of per-trial estimates
  double var_filtered = 0.0;
  double variance_ratio = 0.0;
  double band_low = 0.0;   // 0.5 / rho_hat
  double band_high = 0.0;  // 2.0 / rho_hat
  double z = 4.0;
  bool means_agree = false;    // |mean difference| <= z * diff_se per coordinate
  bool ratio_in_band = false;  // variance_ratio within [band_low, band_high]
  bool pass = false;
};

inline GradientComparison gradient_variance_comparison(const sim::EnvConfig& cfg,
                                                       const sim::PolicyParams& policy,
                                                       double baseline, std::size_t batch,
                                                       std::size_t trials, std::uint64_t seed,
                                                       std::size_t jobs = 1, double z = 4.0) {
  cfg.validate();
  if (batch < 2 || trials < 2)
    throw std::invalid_argument("gradient_variance_comparison: batch and trials must be >= 2");

  struct TrialRow {
    Vec3 full{};
    Vec3 filtered{};
    std::size_t critical = 0;
  };
  const rng::Stream root(seed);
  const auto rows = parallel::map_indexed<TrialRow>(trials, jobs, [&](std::size_t t) {
    const rng::Stream trial = root.child(t);
    TrialRow row;
    for (std::size_t i = 0; i < batch; ++i) {
      const auto eg = detail::rollout_gradient(cfg, policy, trial.child(i));
      const auto xf = episode_contribution(eg, baseline, GradientMode::Full, cfg.effort_coeff);
      const auto xe =
          episode_contribution(eg, baseline, GradientMode::FilteredEpisode, cfg.effort_coeff);
      for (std::size_t j = 0; j < 3; ++j) {
        row.full[j] += xf[j];
        row.filtered[j] += xe[j];
      }
      row.critical += eg.critical ? 1 : 0;
    }
    for (std::size_t j = 0; j < 3; ++j) {
      row.full[j] /= static_cast<double>(batch);
      row.filtered[j] /= static_cast<double>(batch);
    }
    return row;
  });

  stats::VectorMoments full_acc(3), filt_acc(3), diff_acc(3);
  std::size_t critical_total = 0;
  for (const auto& row : rows) {
    full_acc.add(row.full);
    filt_acc.add(row.filtered);
    const std::array<double, 3> d{row.full[0] - row.filtered[0], row.full[1] - row.filtered[1],
                                  row.full[2] - row.filtered[2]};
    diff_acc.add(d);
    critical_total += row.critical;
  }

  GradientComparison cmp;
  cmp.batch = batch;
  cmp.trials = trials;
  cmp.seed = seed;
  cmp.z = z;
  cmp.rho_hat = static_cast<double>(critical_total) / static_cast<double>(batch * trials);
  for (std::size_t j = 0; j < 3; ++j) {
    cmp.mean_full[j] = full_acc.mean()[j];
    cmp.mean_filtered[j] = filt_acc.mean()[j];
    cmp.diff_se[j] = std::sqrt(diff_acc.variance(j) / static_cast<double>(trials));
  }
  cmp.var_full = full_acc.trace_variance();
  cmp.var_filtered = filt_acc.trace_variance();
  cmp.variance_ratio = cmp.var_filtered > 0.0 ? cmp.var_full / cmp.var_filtered : 0.0;
  if (cmp.rho_hat > 0.0) {
    cmp.band_low = 0.5 / cmp.rho_hat;
    cmp.band_high = 2.0 / cmp.rho_hat;
  }
  cmp.means_agree = true;
  for (std::size_t j = 0; j < 3; ++j)
    cmp.means_agree = cmp.means_agree &&
                      std::abs(cmp.mean_full[j] - cmp.mean_filtered[j]) <= z * cmp.diff_se[j];
  cmp.ratio_in_band =
      cmp.rho_hat > 0.0 && cmp.variance_ratio >= cmp.band_low && cmp.variance_ratio <= cmp.band_high;
  cmp.pass = cmp.means_agree && cmp.ratio_in_band;
  return cmp;
}

struct BaselineSpec {
  enum class Kind : std::uint8_t { Constant, RunningMean } kind = Kind::RunningMean;
  double value = 0.0;  // Constant: the baseline; RunningMean: the starting value
};

struct TrainOptions {
  std::size_t iterations = 50;
  std::size_t batch = 1000;
  double learning_rate = 0.05;
  BaselineSpec baseline{};
  std::size_t eval_episodes = 400;  // forced-conflict evaluation bank per iteration
  double theta_bound = 50.0;        // divergence guard on |theta|
  std::size_t jobs = 1;
};

struct LearningCurve {
  struct Point {
    std::size_t iter = 0;
    Vec3 theta{};                        // parameters at the start of the iteration
    double crash_rate_batch = 0.0;       // on-policy crash frequency in the batch
    double eval_conflict_crash_rate = 0.0;  // crash rate under forced conflict, fixed bank
    core::GradientEstimate gradient;
    double baseline = 0.0;
  };
  std::vector<Point> points;
  Vec3 final_theta{};
  double final_eval_conflict_crash_rate = 0.0;
  bool diverged = false;
};

inline constexpr std::size_t kTargetNotReached = static_cast<std::size_t>(-1);

// First iteration from which the forced-conflict eval crash rate stays at or
// below the target for the rest of training (final policy included).  A
// transient dip that later leaves the target set does not count.
inline std::size_t iterations_to_target(const LearningCurve& curve, double target) {
  if (curve.final_eval_conflict_crash_rate > target) return kTargetNotReached;
  std::size_t entry = curve.points.size();
  for (std::size_t k = curve.points.size(); k-- > 0;) {
    if (curve.points[k].eval_conflict_crash_rate > target) break;
    entry = k;
  }
  return entry;
}

// Crash rate of the policy under forced conflict, on a fixed episode bank.
inline double conflict_crash_rate(const sim::EnvConfig& cfg, const sim::PolicyParams& policy,
                                  std::size_t episodes, rng::Stream bank, std::size_t jobs = 1) {
  sim::EnvConfig forced = cfg;
  forced.conflict_prob = 1.0;
  const auto crashes = parallel::map_indexed<std::uint8_t>(episodes, jobs, [&](std::size_t i) {
    return static_cast<std::uint8_t>(sim::run_episode(forced, policy, bank.child(i)).outcome ==
                                     sim::Outcome::Crash);
  });
  std::size_t count = 0;
  for (auto c : crashes) count += c;
  return static_cast<double>(count) / static_cast<double>(episodes);
}

// Plain gradient ascent on the expected return.  Named streams under the
// master seed: child 1 -> per-iteration batches, child 2 -> the fixed
// evaluation bank (shared across iterations so eval noise is common).
inline LearningCurve train(const sim::EnvConfig& cfg, const sim::PolicyParams& policy0,
                           GradientMode mode, const TrainOptions& opt, std::uint64_t seed) {
  cfg.validate();
  if (opt.iterations == 0) throw std::invalid_argument("train: iterations must be >= 1");
  if (opt.batch < 2) throw std::invalid_argument("train: batch must be >= 2");
  if (!(opt.learning_rate >= 0.0)) throw std::invalid_argument("train: learning_rate must be >= 0");

  const rng::Stream root(seed);
  const rng::Stream batch_root = root.child(1);
  const rng::Stream eval_bank = root.child(2);

  LearningCurve curve;
  curve.points.reserve(opt.iterations);
  sim::PolicyParams policy = policy0;
  double baseline = opt.baseline.value;

  for (std::size_t iter = 0; iter < opt.iterations; ++iter) {
    const rng::Stream iter_stream = batch_root.child(iter);
    const auto grads = parallel::map_indexed<EpisodeGradient>(
        opt.batch, opt.jobs,
        [&](std::size_t i) { return detail::rollout_gradient(cfg, policy, iter_stream.child(i)); });

    stats::VectorMoments acc(3);
    double return_sum = 0.0;
    std::size_t crashes = 0;
    for (const auto& eg : grads) {
      acc.add(episode_contribution(eg, baseline, mode, cfg.effort_coeff));
      return_sum += eg.total_return;
      crashes += eg.outcome == sim::Outcome::Crash ? 1 : 0;
    }

    LearningCurve::Point pt;
    pt.iter = iter;
    pt.theta = policy.theta;
    pt.crash_rate_batch = static_cast<double>(crashes) / static_cast<double>(opt.batch);
    pt.eval_conflict_crash_rate =
        conflict_crash_rate(cfg, policy, opt.eval_episodes, eval_bank, opt.jobs);
    pt.baseline = baseline;
    pt.gradient.mean = acc.mean();
    pt.gradient.sample_variance = acc.trace_variance();
    pt.gradient.n = opt.batch;
    pt.gradient.kind =
        mode == GradientMode::Full ? core::EstimatorKind::Mu1 : core::EstimatorKind::Mu2;
    curve.points.push_back(pt);

    double norm = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      policy.theta[j] += opt.learning_rate * pt.gradient.mean[j];
      norm += policy.theta[j] * policy.theta[j];
    }
    if (std::sqrt(norm) > opt.theta_bound) {
      curve.diverged = true;
      break;
    }
    if (opt.baseline.kind == BaselineSpec::Kind::RunningMean)
      baseline = return_sum / static_cast<double>(opt.batch);
  }

  curve.final_theta = policy.theta;
  curve.final_eval_conflict_crash_rate =
      conflict_crash_rate(cfg, policy, opt.eval_episodes, eval_bank, opt.jobs);
  return curve;
}

}  // namespace raregrad::rl
