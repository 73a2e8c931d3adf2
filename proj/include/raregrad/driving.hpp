#pragma once

// Minimal 1-D car-following episode with a rare lead-vehicle hard brake.
//
// Two point masses: an ego vehicle following a lead vehicle at an initial
// gap, both at the same initial speed.  With probability conflict_prob per
// episode the lead brakes hard to a stop, starting at a uniformly random
// step in the first half of the horizon.  The ego follows a stochastic
// policy: brake probability is a logistic function of the gap shortfall
// and the closing speed.  Episodes end at the horizon or when the gap
// reaches zero (crash).
//
// Rewards: crash_penalty at a crash, plus a per-step control-effort term
// centered at its conditional mean, -effort_coeff * (brake - p).  The
// centering makes no-conflict episodes carry exactly zero expected
// gradient signal while leaving their gradient variance positive, which is
// the regime the estimators are compared in.
//
// Episode randomness is a counter stream: draw 0 decides the conflict,
// draw 1 the onset step, draw 2+t the action at step t.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "raregrad/mixture.hpp"
#include "raregrad/parallel.hpp"
#include "raregrad/rng.hpp"
#include "raregrad/stats.hpp"

namespace raregrad::sim {

using Vec3 = std::array<double, 3>;

struct EnvConfig {
  double conflict_prob = 0.01;  // per-episode probability of the lead hard brake
  int horizon = 100;            // steps
  double dt = 0.1;              // seconds per step
  double init_gap = 30.0;       // m
  double init_speed = 20.0;     // m/s, both vehicles
  double lead_decel = 8.0;      // m/s^2, magnitude of the lead hard brake
  double ego_decel = 6.0;       // m/s^2, magnitude of the ego brake
  double near_miss_gap = 1.0;   // m, below this a resolved conflict is a near miss
  double crash_penalty = -1.0;
  double effort_coeff = 0.05;   // control-effort shaping coefficient
  double feature_gap_ref = 10.0;  // m, reference gap in the policy feature

  void validate() const {
    if (!(conflict_prob >= 0.0) || conflict_prob > 1.0)
      throw std::invalid_argument("EnvConfig: conflict_prob must lie in [0, 1]");
    if (horizon < 10) throw std::invalid_argument("EnvConfig: horizon must be >= 10");
    if (!(dt > 0.0)) throw std::invalid_argument("EnvConfig: dt must be positive");
    if (!(near_miss_gap > 0.0)) throw std::invalid_argument("EnvConfig: near_miss_gap must be positive");
    if (!(init_gap > near_miss_gap))
      throw std::invalid_argument("EnvConfig: init_gap must exceed near_miss_gap");
    if (!(init_speed > 0.0)) throw std::invalid_argument("EnvConfig: init_speed must be positive");
    if (!(lead_decel > 0.0) || !(ego_decel > 0.0))
      throw std::invalid_argument("EnvConfig: decelerations must be positive");
    if (!(effort_coeff >= 0.0)) throw std::invalid_argument("EnvConfig: effort_coeff must be >= 0");
  }
};

// Logistic brake policy over (gap shortfall, closing speed, bias).
struct PolicyParams {
  Vec3 theta{0.0, 0.0, 0.0};
};

inline Vec3 policy_features(const EnvConfig& cfg, double gap, double closing_speed) noexcept {
  return {cfg.feature_gap_ref - gap, closing_speed, 1.0};
}

inline double brake_probability(const PolicyParams& policy, const Vec3& features) noexcept {
  const double a = policy.theta[0] * features[0] + policy.theta[1] * features[1] +
                   policy.theta[2] * features[2];
  return 1.0 / (1.0 + std::exp(-a));
}

enum class Outcome : std::uint8_t { Uneventful, NearMiss, Crash };

struct Step {
  double gap = 0.0;         // post-step gap, m
  double ego_speed = 0.0;   // post-step, m/s
  double lead_speed = 0.0;  // post-step, m/s
  int brake = 0;
  double brake_prob = 0.0;
  Vec3 score{};  // grad log pi(a|s)
  Vec3 dprob{};  // grad of the brake probability at s
  double reward = 0.0;
};

struct StepRange {
  int first = 0;
  int last = 0;  // inclusive
};

struct Trajectory {
  std::vector<Step> steps;
  Outcome outcome = Outcome::Uneventful;
  std::optional<int> conflict_onset;
  std::optional<StepRange> critical_window;
  double total_return = 0.0;
};

struct ClassifiedEvent {
  core::EventLabel label = core::EventLabel::Normal;
  std::optional<StepRange> critical_window;
};

// Label and temporal window of a completed episode.  Critical covers both
// crashes and near misses; a conflict episode that never dips below the
// near-miss gap stays Normal.  The window runs from the conflict onset to
// the crash step, or to the first step after the closest approach at which
// the gap clears the near-miss threshold again (clamped to the last step).
inline ClassifiedEvent classify_trajectory(const EnvConfig& cfg, const Trajectory& traj) {
  if (traj.steps.empty()) throw std::invalid_argument("classify_trajectory: empty trajectory");
  const bool crash = traj.outcome == Outcome::Crash;
  if (traj.outcome != Outcome::Uneventful && !traj.conflict_onset)
    throw std::invalid_argument(
        "classify_trajectory: crash or near-miss outcome requires a conflict onset");

  ClassifiedEvent ev;
  ev.label = traj.outcome == Outcome::Uneventful ? core::EventLabel::Normal
                                                 : core::EventLabel::Critical;
  if (!traj.conflict_onset) return ev;

  const int onset = *traj.conflict_onset;
  const int last = static_cast<int>(traj.steps.size()) - 1;
  int end = last;
  if (crash) {
    end = last;  // episode terminates at the crash step
  } else {
    int min_step = onset;
    for (int t = onset; t <= last; ++t)
      if (traj.steps[t].gap < traj.steps[min_step].gap) min_step = t;
    end = last;
    for (int t = min_step + 1; t <= last; ++t) {
      if (traj.steps[t].gap > cfg.near_miss_gap) {
        end = t;
        break;
      }
    }
  }
  ev.critical_window = StepRange{onset, end};
  return ev;
}

// One seeded episode.  Speeds update before the gap; both vehicles clamp
// at standstill.  Deterministic given (config, policy, stream).
inline Trajectory run_episode(const EnvConfig& cfg, const PolicyParams& policy,
                              rng::Stream stream) {
  cfg.validate();
  Trajectory traj;
  traj.steps.reserve(static_cast<std::size_t>(cfg.horizon));

  const bool conflict = stream.uniform(0) < cfg.conflict_prob;
  int onset = 0;
  if (conflict) {
    const int half = cfg.horizon / 2;
    onset = static_cast<int>(stream.uniform(1) * half);
    if (onset >= half) onset = half - 1;  // uniform(1) < 1 makes this unreachable
    traj.conflict_onset = onset;
  }

  double gap = cfg.init_gap;
  double ego_v = cfg.init_speed;
  double lead_v = cfg.init_speed;
  bool crashed = false;

  for (int t = 0; t < cfg.horizon && !crashed; ++t) {
    const Vec3 phi = policy_features(cfg, gap, ego_v - lead_v);
    const double p = brake_probability(policy, phi);
    const int brake = stream.uniform(static_cast<std::uint64_t>(2 + t)) < p ? 1 : 0;

    ego_v = brake ? std::max(0.0, ego_v - cfg.ego_decel * cfg.dt) : ego_v;
    if (conflict && t >= onset) lead_v = std::max(0.0, lead_v - cfg.lead_decel * cfg.dt);
    gap += (lead_v - ego_v) * cfg.dt;
    crashed = gap <= 0.0;

    Step step;
    step.gap = gap;
    step.ego_speed = ego_v;
    step.lead_speed = lead_v;
    step.brake = brake;
    step.brake_prob = p;
    const double diff = static_cast<double>(brake) - p;
    const double dp = p * (1.0 - p);
    for (std::size_t j = 0; j < 3; ++j) {
      step.score[j] = diff * phi[j];
      step.dprob[j] = dp * phi[j];
    }
    step.reward = -cfg.effort_coeff * diff + (crashed ? cfg.crash_penalty : 0.0);
    traj.total_return += step.reward;
    traj.steps.push_back(step);
  }

  if (crashed) {
    traj.outcome = Outcome::Crash;
  } else if (conflict) {
    double min_gap = cfg.init_gap;
    for (int t = onset; t < static_cast<int>(traj.steps.size()); ++t)
      min_gap = std::min(min_gap, traj.steps[t].gap);
    traj.outcome = min_gap <= cfg.near_miss_gap ? Outcome::NearMiss : Outcome::Uneventful;
  }
  traj.critical_window = classify_trajectory(cfg, traj).critical_window;
  return traj;
}

inline Trajectory run_episode(const EnvConfig& cfg, const PolicyParams& policy,
                              std::uint64_t seed) {
  return run_episode(cfg, policy, rng::Stream(seed));
}

struct CrashRate {
  double rate = 0.0;
  double ci_low = 0.0;
  double ci_high = 1.0;
  std::size_t crashes = 0;
  std::size_t episodes = 0;
};

// Monte Carlo crash frequency with a normal-approximation binomial CI.
// Episode i uses the child stream at index i.
inline CrashRate crash_rate(const EnvConfig& cfg, const PolicyParams& policy,
                            std::size_t episodes, std::uint64_t seed, std::size_t jobs = 1,
                            double z = 1.96) {
  cfg.validate();
  if (episodes == 0) throw std::invalid_argument("crash_rate: episodes must be positive");
  const rng::Stream root(seed);
  const auto crashes = parallel::map_indexed<std::uint8_t>(episodes, jobs, [&](std::size_t i) {
    return static_cast<std::uint8_t>(run_episode(cfg, policy, root.child(i)).outcome ==
                                     Outcome::Crash);
  });
  std::size_t count = 0;
  for (auto c : crashes) count += c;
  const auto ci = stats::binomial_ci(count, episodes, z);
  return {ci.rate, ci.low, ci.high, count, episodes};
}

}  // namespace raregrad::sim
