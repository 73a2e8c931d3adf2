#pragma once

// Experiment front door: config ingestion, seeded dispatch, persistence.
//
// A config is one JSON document with a version, a kind, a master seed and
// kind-specific parameters.  Sub-seeds are derived by the documented hash
// chain rng::experiment_key(master seed, kind ordinal) -> rng::derive(.,
// operation index) -> per-trial children, so no two experiment kinds share
// a stream and a stored config replays bit-exactly for any --jobs value.
//
// Outputs land in one directory per run named <timestamp>-<confighash>:
// a verbatim copy of the config, one table per record type (CSV or JSON),
// and a plain-text summary.  Wall time is printed to the console only, so
// re-runs produce byte-identical files.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "raregrad/driving.hpp"
#include "raregrad/estimators.hpp"
#include "raregrad/mixture.hpp"
#include "raregrad/reinforce.hpp"
#include "raregrad/rng.hpp"
#include "raregrad/scaling.hpp"
#include "raregrad/serialize.hpp"
#include "raregrad/verification.hpp"
#include "raregrad/version.hpp"

namespace raregrad::harness {

using nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Kind : std::uint8_t { VerifyTheorem, SnrSweep, Longtail, IsDim, GradCompare, Train };

inline const char* kind_name(Kind k) {
  switch (k) {
    case Kind::VerifyTheorem: return "verify-theorem";
    case Kind::SnrSweep: return "snr-sweep";
    case Kind::Longtail: return "longtail";
    case Kind::IsDim: return "is-dim";
    case Kind::GradCompare: return "grad-compare";
    case Kind::Train: return "train";
  }
  return "?";
}

inline Kind kind_from(const std::string& s) {
  for (Kind k : {Kind::VerifyTheorem, Kind::SnrSweep, Kind::Longtail, Kind::IsDim,
                 Kind::GradCompare, Kind::Train})
    if (s == kind_name(k)) return k;
  throw ConfigError("kind: unknown experiment kind '" + s + "'");
}

enum class Format : std::uint8_t { Csv, Json };

inline Format format_from(const std::string& s) {
  if (s == "csv") return Format::Csv;
  if (s == "json") return Format::Json;
  throw ConfigError("format: expected 'csv' or 'json', got '" + s + "'");
}

// --- field access with path-carrying errors ---------------------------------

namespace detail {

inline std::string join_path(const std::string& path, const char* key) {
  return path.empty() ? key : path + "." + key;
}

inline const json& member(const json& j, const std::string& path, const char* key) {
  if (!j.is_object() || !j.contains(key))
    throw ConfigError("missing field: " + join_path(path, key));
  return j.at(key);
}

template <typename T>
T field(const json& j, const std::string& path, const char* key) {
  try {
    return member(j, path, key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("invalid value for field: " + join_path(path, key));
  }
}

template <typename T>
T field_or(const json& j, const std::string& path, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("invalid value for field: " + join_path(path, key));
  }
}

template <typename Fn>
void validate_as(const std::string& path, Fn&& fn) {
  try {
    fn();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline core::MixtureSpec spec_from(const json& j, const std::string& path) {
  core::MixtureSpec spec;
  spec.rho_b = field<double>(j, path, "rho_b");
  spec.mean_b = field<std::vector<double>>(j, path, "mean_b");
  spec.var_a = field<double>(j, path, "var_a");
  spec.var_b = field<double>(j, path, "var_b");
  spec.family = io::family_from(field_or<std::string>(j, path, "family", "gaussian"));
  validate_as(path, [&] { spec.validate(); });
  return spec;
}

inline sim::EnvConfig env_from(const json& j, const std::string& path) {
  sim::EnvConfig cfg;
  cfg.conflict_prob = field_or(j, path, "conflict_prob", cfg.conflict_prob);
  cfg.horizon = field_or(j, path, "horizon", cfg.horizon);
  cfg.dt = field_or(j, path, "dt", cfg.dt);
  cfg.init_gap = field_or(j, path, "init_gap", cfg.init_gap);
  cfg.init_speed = field_or(j, path, "init_speed", cfg.init_speed);
  cfg.lead_decel = field_or(j, path, "lead_decel", cfg.lead_decel);
  cfg.ego_decel = field_or(j, path, "ego_decel", cfg.ego_decel);
  cfg.near_miss_gap = field_or(j, path, "near_miss_gap", cfg.near_miss_gap);
  cfg.crash_penalty = field_or(j, path, "crash_penalty", cfg.crash_penalty);
  cfg.effort_coeff = field_or(j, path, "effort_coeff", cfg.effort_coeff);
  cfg.feature_gap_ref = field_or(j, path, "feature_gap_ref", cfg.feature_gap_ref);
  validate_as(path, [&] { cfg.validate(); });
  return cfg;
}

inline sim::Vec3 vec3_from(const json& j, const std::string& path, const char* key) {
  const auto v = field<std::vector<double>>(j, path, key);
  if (v.size() != 3)
    throw ConfigError("invalid value for field: " + join_path(path, key) + " (need 3 numbers)");
  return {v[0], v[1], v[2]};
}

}  // namespace detail

// --- kind parameter blocks ---------------------------------------------------

struct VerifyTheoremParams {
  core::MixtureSpec spec;
  std::size_t unbiasedness_batch = 10000;
  std::size_t unbiasedness_trials = 1000;
  double unbiasedness_z = 4.0;
  std::size_t ordering_batch = 1000;
  std::size_t ordering_trials = 10000;
  double ordering_tolerance = 0.10;
  std::vector<double> rho_grid{0.5, 0.1, 0.01};
  std::size_t rho_batch = 1000;
  std::size_t rho_trials = 10000;
  double rho_tolerance = 0.10;
  std::size_t residual_samples = 1000000;
  double residual_tolerance = 0.01;
};

struct SnrSweepParams {
  std::vector<double> rho_grid{0.1, 0.05, 0.01, 0.005, 0.001};
  double mean_b = 1.0;
  double var_b = 1.0;  // var_a is derived as var_b + mean_b^2
  std::size_t samples = 1000000;
  double rel_tolerance = 0.10;
};

struct LongtailParams {
  std::vector<double> rho_grid;
  double var_a = 2.0;
  double relative_error = 0.1;
  double z = 2.0;
  double expected_slope_mu1 = -2.0;
  double expected_slope_mu2 = -1.0;
  double slope_tolerance = 0.1;  // absolute
};

struct IsDimParams {
  std::vector<int> dim_grid;
  double shift = 0.5;
  std::size_t n = 1000000;
  std::size_t trials = 10;
  double slope_rel_tolerance = 0.10;
  double r2_min = 0.90;
  bool unit_check = true;  // E[w^2] = e at (d=1, shift=1)
  std::size_t unit_check_n = 1000000;
  std::size_t unit_check_trials = 2;
  double unit_check_z = 4.0;
};

struct GradCompareParams {
  sim::EnvConfig env;
  sim::PolicyParams theta;
  double baseline = 0.0;
  std::size_t batch = 2000;
  std::size_t trials = 200;
  double z = 4.0;
  bool oracle = true;
  // The oracle check may run on its own fixture; by default it inherits the
  // comparison env and policy.
  sim::EnvConfig oracle_env;
  bool oracle_env_set = false;
  sim::PolicyParams oracle_theta;
  bool oracle_theta_set = false;
  double oracle_baseline = 0.0;
  double oracle_epsilon = 0.05;
  std::size_t oracle_episodes = 200000;
  std::size_t oracle_reinforce_batch = 400000;
  double oracle_rel_tolerance = 0.05;
  double oracle_consistency_tolerance = 0.01;
};

struct TrainParams {
  sim::EnvConfig env;
  sim::PolicyParams theta0;
  rl::GradientMode mode = rl::GradientMode::Full;
  rl::TrainOptions options;
  double target_eval_crash_rate = -1.0;  // gate when >= 0
  std::size_t dump_episodes = 0;
};

struct ExperimentConfig {
  int version = 1;
  Kind kind = Kind::VerifyTheorem;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string output_dir = "runs";
  std::variant<VerifyTheoremParams, SnrSweepParams, LongtailParams, IsDimParams, GradCompareParams,
               TrainParams>
      params;

  static ExperimentConfig from_json(const json& j);
  static ExperimentConfig load(const std::string& path);
  json to_json() const;
};

inline ExperimentConfig ExperimentConfig::from_json(const json& j) {
  using namespace detail;
  ExperimentConfig c;
  c.version = field<int>(j, "", "version");
  if (c.version != 1) throw ConfigError("version: unsupported config version");
  c.kind = kind_from(field<std::string>(j, "", "kind"));
  c.seed = field<std::uint64_t>(j, "", "seed");
  c.jobs = field_or<std::size_t>(j, "", "jobs", 1);
  if (c.jobs == 0) throw ConfigError("jobs: must be >= 1");
  c.output_dir = field_or<std::string>(j, "", "output_dir", "runs");

  switch (c.kind) {
    case Kind::VerifyTheorem: {
      VerifyTheoremParams p;
      p.spec = spec_from(member(j, "", "spec"), "spec");
      if (j.contains("unbiasedness")) {
        const auto& u = j.at("unbiasedness");
        p.unbiasedness_batch = field_or(u, "unbiasedness", "batch_size", p.unbiasedness_batch);
        p.unbiasedness_trials = field_or(u, "unbiasedness", "trials", p.unbiasedness_trials);
        p.unbiasedness_z = field_or(u, "unbiasedness", "z", p.unbiasedness_z);
      }
      if (j.contains("variance_ordering")) {
        const auto& o = j.at("variance_ordering");
        p.ordering_batch = field_or(o, "variance_ordering", "batch_size", p.ordering_batch);
        p.ordering_trials = field_or(o, "variance_ordering", "trials", p.ordering_trials);
        p.ordering_tolerance = field_or(o, "variance_ordering", "rel_tolerance", p.ordering_tolerance);
      }
      if (j.contains("rho_factor")) {
        const auto& r = j.at("rho_factor");
        p.rho_grid = field_or(r, "rho_factor", "rho_grid", p.rho_grid);
        p.rho_batch = field_or(r, "rho_factor", "batch_size", p.rho_batch);
        p.rho_trials = field_or(r, "rho_factor", "trials", p.rho_trials);
        p.rho_tolerance = field_or(r, "rho_factor", "rel_tolerance", p.rho_tolerance);
      }
      if (j.contains("assumption_residual")) {
        const auto& a = j.at("assumption_residual");
        p.residual_samples = field_or(a, "assumption_residual", "samples", p.residual_samples);
        p.residual_tolerance = field_or(a, "assumption_residual", "tolerance", p.residual_tolerance);
      }
      c.params = p;
      break;
    }
    case Kind::SnrSweep: {
      SnrSweepParams p;
      p.rho_grid = field_or(j, "", "rho_grid", p.rho_grid);
      p.mean_b = field_or(j, "", "mean_b", p.mean_b);
      p.var_b = field_or(j, "", "var_b", p.var_b);
      p.samples = field_or(j, "", "samples", p.samples);
      p.rel_tolerance = field_or(j, "", "rel_tolerance", p.rel_tolerance);
      if (p.rho_grid.empty()) throw ConfigError("rho_grid: must not be empty");
      c.params = p;
      break;
    }
    case Kind::Longtail: {
      LongtailParams p;
      if (j.contains("rho_grid")) {
        p.rho_grid = field<std::vector<double>>(j, "", "rho_grid");
      } else {
        const double lo = field<double>(j, "", "rho_min");
        const double hi = field<double>(j, "", "rho_max");
        const auto points = field<std::size_t>(j, "", "points");
        if (points < 2 || !(lo > 0.0) || !(hi > lo))
          throw ConfigError("rho_min/rho_max/points: need 0 < rho_min < rho_max and points >= 2");
        for (std::size_t i = 0; i < points; ++i) {
          const double t = static_cast<double>(i) / static_cast<double>(points - 1);
          p.rho_grid.push_back(std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo))));
        }
      }
      p.var_a = field_or(j, "", "var_a", p.var_a);
      p.relative_error = field_or(j, "", "relative_error", p.relative_error);
      p.z = field_or(j, "", "z", p.z);
      p.expected_slope_mu1 = field_or(j, "", "expected_slope_mu1", p.expected_slope_mu1);
      p.expected_slope_mu2 = field_or(j, "", "expected_slope_mu2", p.expected_slope_mu2);
      p.slope_tolerance = field_or(j, "", "slope_tolerance", p.slope_tolerance);
      c.params = p;
      break;
    }
    case Kind::IsDim: {
      IsDimParams p;
      if (j.contains("dim_grid")) {
        p.dim_grid = field<std::vector<int>>(j, "", "dim_grid");
      } else {
        const auto d_max = field<int>(j, "", "dim_max");
        if (d_max < 1) throw ConfigError("dim_max: must be >= 1");
        for (int d = 1; d <= d_max; ++d) p.dim_grid.push_back(d);
      }
      p.shift = field_or(j, "", "shift", p.shift);
      p.n = field_or(j, "", "n", p.n);
      p.trials = field_or(j, "", "trials", p.trials);
      p.slope_rel_tolerance = field_or(j, "", "slope_rel_tolerance", p.slope_rel_tolerance);
      p.r2_min = field_or(j, "", "r2_min", p.r2_min);
      p.unit_check = field_or(j, "", "unit_check", p.unit_check);
      p.unit_check_n = field_or(j, "", "unit_check_n", p.unit_check_n);
      p.unit_check_trials = field_or(j, "", "unit_check_trials", p.unit_check_trials);
      p.unit_check_z = field_or(j, "", "unit_check_z", p.unit_check_z);
      c.params = p;
      break;
    }
    case Kind::GradCompare: {
      GradCompareParams p;
      p.env = env_from(member(j, "", "env"), "env");
      p.theta.theta = vec3_from(j, "", "theta");
      p.baseline = field_or(j, "", "baseline", p.baseline);
      p.batch = field_or(j, "", "batch", p.batch);
      p.trials = field_or(j, "", "trials", p.trials);
      p.z = field_or(j, "", "z", p.z);
      if (j.contains("oracle")) {
        const auto& o = j.at("oracle");
        p.oracle = field_or(o, "oracle", "enabled", true);
        if (o.contains("env")) {
          p.oracle_env = env_from(o.at("env"), "oracle.env");
          p.oracle_env_set = true;
        }
        if (o.contains("theta")) {
          p.oracle_theta.theta = vec3_from(o, "oracle", "theta");
          p.oracle_theta_set = true;
        }
        p.oracle_baseline = field_or(o, "oracle", "baseline", p.oracle_baseline);
        p.oracle_epsilon = field_or(o, "oracle", "epsilon", p.oracle_epsilon);
        p.oracle_episodes = field_or(o, "oracle", "episodes", p.oracle_episodes);
        p.oracle_reinforce_batch =
            field_or(o, "oracle", "reinforce_batch", p.oracle_reinforce_batch);
        p.oracle_rel_tolerance = field_or(o, "oracle", "rel_tolerance", p.oracle_rel_tolerance);
        p.oracle_consistency_tolerance =
            field_or(o, "oracle", "consistency_tolerance", p.oracle_consistency_tolerance);
      }
      c.params = p;
      break;
    }
    case Kind::Train: {
      TrainParams p;
      p.env = env_from(member(j, "", "env"), "env");
      p.theta0.theta = vec3_from(j, "", "theta0");
      p.mode = io::mode_from(field<std::string>(j, "", "mode"));
      p.options.iterations = field<std::size_t>(j, "", "iterations");
      p.options.batch = field<std::size_t>(j, "", "batch");
      p.options.learning_rate = field<double>(j, "", "learning_rate");
      if (j.contains("baseline")) {
        const auto& b = j.at("baseline");
        const auto kind = field_or<std::string>(b, "baseline", "kind", "running-mean");
        if (kind == "running-mean")
          p.options.baseline.kind = rl::BaselineSpec::Kind::RunningMean;
        else if (kind == "constant")
          p.options.baseline.kind = rl::BaselineSpec::Kind::Constant;
        else
          throw ConfigError("baseline.kind: expected 'running-mean' or 'constant'");
        p.options.baseline.value = field_or(b, "baseline", "value", 0.0);
      }
      p.options.eval_episodes = field_or(j, "", "eval_episodes", p.options.eval_episodes);
      p.options.theta_bound = field_or(j, "", "theta_bound", p.options.theta_bound);
      p.target_eval_crash_rate = field_or(j, "", "target_eval_crash_rate", p.target_eval_crash_rate);
      p.dump_episodes = field_or(j, "", "dump_episodes", p.dump_episodes);
      c.params = p;
      break;
    }
  }
  return c;
}

inline ExperimentConfig ExperimentConfig::load(const std::string& path) {
  json j;
  try {
    j = json::parse(io::read_text_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return from_json(j);
}

inline json ExperimentConfig::to_json() const {
  json j{{"version", version}, {"kind", kind_name(kind)}, {"seed", seed}, {"jobs", jobs},
         {"output_dir", output_dir}};
  if (const auto* p = std::get_if<VerifyTheoremParams>(&params)) {
    j["spec"] = io::to_json(p->spec);
    j["unbiasedness"] = {{"batch_size", p->unbiasedness_batch},
                         {"trials", p->unbiasedness_trials},
                         {"z", p->unbiasedness_z}};
    j["variance_ordering"] = {{"batch_size", p->ordering_batch},
                              {"trials", p->ordering_trials},
                              {"rel_tolerance", p->ordering_tolerance}};
    j["rho_factor"] = {{"rho_grid", p->rho_grid},
                       {"batch_size", p->rho_batch},
                       {"trials", p->rho_trials},
                       {"rel_tolerance", p->rho_tolerance}};
    j["assumption_residual"] = {{"samples", p->residual_samples},
                                {"tolerance", p->residual_tolerance}};
  } else if (const auto* p = std::get_if<SnrSweepParams>(&params)) {
    j["rho_grid"] = p->rho_grid;
    j["mean_b"] = p->mean_b;
    j["var_b"] = p->var_b;
    j["samples"] = p->samples;
    j["rel_tolerance"] = p->rel_tolerance;
  } else if (const auto* p = std::get_if<LongtailParams>(&params)) {
    j["rho_grid"] = p->rho_grid;
    j["var_a"] = p->var_a;
    j["relative_error"] = p->relative_error;
    j["z"] = p->z;
    j["expected_slope_mu1"] = p->expected_slope_mu1;
    j["expected_slope_mu2"] = p->expected_slope_mu2;
    j["slope_tolerance"] = p->slope_tolerance;
  } else if (const auto* p = std::get_if<IsDimParams>(&params)) {
    j["dim_grid"] = p->dim_grid;
    j["shift"] = p->shift;
    j["n"] = p->n;
    j["trials"] = p->trials;
    j["slope_rel_tolerance"] = p->slope_rel_tolerance;
    j["r2_min"] = p->r2_min;
    j["unit_check"] = p->unit_check;
    j["unit_check_n"] = p->unit_check_n;
    j["unit_check_trials"] = p->unit_check_trials;
    j["unit_check_z"] = p->unit_check_z;
  } else if (const auto* p = std::get_if<GradCompareParams>(&params)) {
    j["env"] = io::to_json(p->env);
    j["theta"] = std::vector<double>(p->theta.theta.begin(), p->theta.theta.end());
    j["baseline"] = p->baseline;
    j["batch"] = p->batch;
    j["trials"] = p->trials;
    j["z"] = p->z;
    j["oracle"] = {{"enabled", p->oracle},
                   {"baseline", p->oracle_baseline},
                   {"epsilon", p->oracle_epsilon},
                   {"episodes", p->oracle_episodes},
                   {"reinforce_batch", p->oracle_reinforce_batch},
                   {"rel_tolerance", p->oracle_rel_tolerance},
                   {"consistency_tolerance", p->oracle_consistency_tolerance}};
    if (p->oracle_env_set) j["oracle"]["env"] = io::to_json(p->oracle_env);
    if (p->oracle_theta_set)
      j["oracle"]["theta"] =
          std::vector<double>(p->oracle_theta.theta.begin(), p->oracle_theta.theta.end());
  } else if (const auto* p = std::get_if<TrainParams>(&params)) {
    j["env"] = io::to_json(p->env);
    j["theta0"] = std::vector<double>(p->theta0.theta.begin(), p->theta0.theta.end());
    j["mode"] = rl::mode_name(p->mode);
    j["iterations"] = p->options.iterations;
    j["batch"] = p->options.batch;
    j["learning_rate"] = p->options.learning_rate;
    j["baseline"] = {{"kind", p->options.baseline.kind == rl::BaselineSpec::Kind::RunningMean
                                 ? "running-mean"
                                 : "constant"},
                     {"value", p->options.baseline.value}};
    j["eval_episodes"] = p->options.eval_episodes;
    j["theta_bound"] = p->options.theta_bound;
    j["target_eval_crash_rate"] = p->target_eval_crash_rate;
    j["dump_episodes"] = p->dump_episodes;
  }
  return j;
}

// --- results -------------------------------------------------------------------

struct ExperimentResult {
  json config;
  std::vector<io::Table> tables;
  std::vector<std::string> summary_lines;
  std::vector<std::pair<std::string, json>> artifacts;  // extra files, e.g. trajectory dumps
  bool pass = false;
  double wall_seconds = 0.0;  // console-only; never persisted
  std::string tool_version = kToolVersion;
};

namespace detail {

inline std::string pf(bool pass) { return pass ? "PASS" : "FAIL"; }

inline std::string fmt(double v, int precision = 6) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
  return buf;
}

inline void run_verify_theorem(const VerifyTheoremParams& p, std::uint64_t base, std::size_t jobs,
                               ExperimentResult& result) {
  std::vector<verify::VerificationReport> reports;

  auto unb = verify::verify_unbiasedness(p.spec, p.unbiasedness_batch, p.unbiasedness_trials,
                                         rng::derive(base, 0), jobs, p.unbiasedness_z);
  reports.push_back(unb);
  const std::size_t d = p.spec.dim();
  result.summary_lines.push_back(
      "unbiasedness: " + pf(unb.pass) + " (mu1 grand mean " + fmt(unb.empirical[0]) +
      ", mu2 grand mean " + fmt(unb.empirical[d]) + ", mu " + fmt(unb.closed_form[0]) + ", z " +
      fmt(unb.tolerance) + ")");

  auto ord = verify::verify_variance_ordering(p.spec, p.ordering_batch, p.ordering_trials,
                                              rng::derive(base, 1), jobs, p.ordering_tolerance);
  reports.push_back(ord);
  result.summary_lines.push_back("variance ordering: " + pf(ord.pass) + " (Var mu1 " +
                                 fmt(ord.empirical[0]) + " vs closed " + fmt(ord.closed_form[0]) +
                                 ", Var mu2 " + fmt(ord.empirical[1]) + " vs closed " +
                                 fmt(ord.closed_form[1]) + ")");

  bool rho_all = true;
  std::string rho_detail;
  for (std::size_t i = 0; i < p.rho_grid.size(); ++i) {
    core::MixtureSpec spec = p.spec;
    spec.rho_b = p.rho_grid[i];
    auto rep = verify::verify_rho_factor(spec, p.rho_batch, p.rho_trials,
                                         rng::derive(base, 2 + i), jobs, p.rho_tolerance);
    rho_all = rho_all && rep.pass;
    rho_detail += (i ? "; " : "") + std::string("rho ") + fmt(spec.rho_b) + ": ratio " +
                  fmt(rep.empirical[0]) + " vs closed " + fmt(rep.closed_form[0]) + " >= " +
                  fmt(rep.closed_form[1]);
    reports.push_back(std::move(rep));
  }
  result.summary_lines.push_back("rho factor: " + pf(rho_all) + " (" + rho_detail + ")");

  auto res = verify::verify_assumption_residual(p.spec, p.residual_samples,
                                                rng::derive(base, 2 + p.rho_grid.size()),
                                                p.residual_tolerance);
  reports.push_back(res);
  result.summary_lines.push_back("assumption residual: " + pf(res.pass) + " (empirical " +
                                 fmt(res.empirical[0]) + ", analytic " + fmt(res.closed_form[0]) +
                                 ")");

  result.pass = unb.pass && ord.pass && rho_all && res.pass;
  result.tables.push_back(io::reports_table(reports));
}

inline void run_snr_sweep(const SnrSweepParams& p, std::uint64_t base, std::size_t /*jobs*/,
                          ExperimentResult& result) {
  io::Table t;
  t.name = "snr_sweep";
  t.columns = {"rho_b",   "snr_mu1_closed", "snr_mu2_closed", "snr_mu1_empirical",
               "snr_mu2_empirical", "ratio_closed",   "ratio_empirical", "pass"};
  bool all = true;
  for (std::size_t i = 0; i < p.rho_grid.size(); ++i) {
    core::MixtureSpec spec;
    spec.rho_b = p.rho_grid[i];
    spec.mean_b = {p.mean_b};
    spec.var_b = p.var_b;
    spec.var_a = p.var_b + p.mean_b * p.mean_b;
    spec.validate();
    const auto cf = core::closed_form_moments(spec);
    const auto batch = core::sample_mixture(spec, p.samples, rng::Stream(rng::derive(base, i)));
    const double snr1 = core::snr(core::estimate_mu1(batch), cf.mu);
    const double snr2 = core::snr(core::estimate_mu2(batch), cf.mu);
    const double ratio_emp = snr2 / snr1;  // equals the variance ratio
    bool ok = std::abs(snr1 - cf.snr_mu1) <= p.rel_tolerance * cf.snr_mu1;
    ok = ok && std::abs(snr2 - cf.snr_mu2) <= p.rel_tolerance * cf.snr_mu2;
    ok = ok && std::abs(ratio_emp - cf.ratio) <= p.rel_tolerance * cf.ratio;
    all = all && ok;
    t.add_row({io::format_double(spec.rho_b), io::format_double(cf.snr_mu1),
               io::format_double(cf.snr_mu2), io::format_double(snr1), io::format_double(snr2),
               io::format_double(cf.ratio), io::format_double(ratio_emp), ok ? "true" : "false"});
    if (i == 0 || spec.rho_b == 0.01)
      result.summary_lines.push_back("snr at rho " + fmt(spec.rho_b) + ": mu1 " + fmt(snr1) +
                                     " (closed " + fmt(cf.snr_mu1) + "), mu2 " + fmt(snr2) +
                                     ", ratio " + fmt(ratio_emp) + ": " + pf(ok));
  }
  result.summary_lines.push_back("snr collapse sweep: " + pf(all));
  result.pass = all;
  result.tables.push_back(std::move(t));
}

inline void run_longtail(const LongtailParams& p, std::uint64_t /*base*/, std::size_t /*jobs*/,
                         ExperimentResult& result) {
  const auto mu1 = verify::longtail_curve(p.rho_grid, p.var_a, p.relative_error, p.z,
                                          core::EstimatorKind::Mu1);
  const auto mu2 = verify::longtail_curve(p.rho_grid, p.var_a, p.relative_error, p.z,
                                          core::EstimatorKind::Mu2);
  result.tables.push_back(io::longtail_table(p.rho_grid, mu1, mu2));

  const bool s1 = mu1.slope_defined &&
                  std::abs(mu1.fitted_slope - p.expected_slope_mu1) <= p.slope_tolerance;
  const bool s2 = mu2.slope_defined &&
                  std::abs(mu2.fitted_slope - p.expected_slope_mu2) <= p.slope_tolerance;
  result.summary_lines.push_back("longtail slope mu1: " + fmt(mu1.fitted_slope) + " (expected " +
                                 fmt(p.expected_slope_mu1) + " +- " + fmt(p.slope_tolerance) +
                                 ", R2 " + fmt(mu1.fit_r2) + "): " + pf(s1));
  result.summary_lines.push_back("longtail slope mu2: " + fmt(mu2.fitted_slope) + " (expected " +
                                 fmt(p.expected_slope_mu2) + " +- " + fmt(p.slope_tolerance) +
                                 ", R2 " + fmt(mu2.fit_r2) + "): " + pf(s2));
  result.pass = s1 && s2;
}

inline void run_is_dim(const IsDimParams& p, std::uint64_t base, std::size_t jobs,
                       ExperimentResult& result) {
  const auto sweep =
      verify::dimension_sweep(p.dim_grid, p.shift, p.n, p.trials, rng::derive(base, 0), jobs);
  auto table = io::curve_table("is_dim", "dim", "log_w2_mean", sweep);
  // column of plain E[w^2] alongside the log
  table.columns.insert(table.columns.begin() + 1, "w2_mean");
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    table.rows[i].insert(table.rows[i].begin() + 1,
                         io::format_double(std::exp(sweep.y_values[i])));
  result.tables.push_back(std::move(table));

  const double expected = p.shift * p.shift;
  const bool slope_ok = sweep.slope_defined &&
                        std::abs(sweep.fitted_slope - expected) <= p.slope_rel_tolerance * expected;
  const bool r2_ok = sweep.slope_defined && sweep.fit_r2 >= p.r2_min;
  result.summary_lines.push_back("is-dim slope: " + fmt(sweep.fitted_slope) + " (expected " +
                                 fmt(expected) + " +- " + fmt(p.slope_rel_tolerance * 100) +
                                 "%, R2 " + fmt(sweep.fit_r2) + " >= " + fmt(p.r2_min) +
                                 "): " + pf(slope_ok && r2_ok));
  std::size_t unreliable = 0;
  for (auto r : sweep.reliable) unreliable += r ? 0 : 1;
  if (unreliable > 0)
    result.summary_lines.push_back("is-dim: " + std::to_string(unreliable) +
                                   " point(s) beyond the budget's accuracy (rel SE > 50%), "
                                   "flagged unreliable and excluded from the fit");

  bool unit_ok = true;
  if (p.unit_check) {
    const int one[] = {1};
    const auto u = verify::dimension_sweep(std::span<const int>(one, 1), 1.0, p.unit_check_n,
                                           p.unit_check_trials, rng::derive(base, 1), jobs);
    const double w2 = std::exp(u.y_values[0]);
    const double e = std::exp(1.0);
    const double se =
        e * verify::likelihood_ratio_rel_se(
                1, 1.0, static_cast<std::uint64_t>(p.unit_check_n) * p.unit_check_trials);
    unit_ok = std::abs(w2 - e) <= p.unit_check_z * se;
    result.summary_lines.push_back("is-dim unit check at (d=1, shift=1): E[w^2] " + fmt(w2) +
                                   " vs e " + fmt(e) + " (z " + fmt(p.unit_check_z) +
                                   "): " + pf(unit_ok));
  }
  result.pass = slope_ok && r2_ok && unit_ok;
}

inline void run_grad_compare(const GradCompareParams& p, std::uint64_t base, std::size_t jobs,
                             ExperimentResult& result) {
  const auto cmp = rl::gradient_variance_comparison(p.env, p.theta, p.baseline, p.batch, p.trials,
                                                    rng::derive(base, 0), jobs, p.z);
  result.tables.push_back(io::comparison_table(cmp));
  result.tables.push_back(io::comparison_means_table(cmp));
  result.summary_lines.push_back("grad-compare rho_hat: " + fmt(cmp.rho_hat));
  result.summary_lines.push_back("grad-compare unbiasedness: " + pf(cmp.means_agree) +
                                 " (full vs filtered grand means within " + fmt(cmp.z) + " SE)");
  result.summary_lines.push_back(
      "grad-compare variance ratio: " + fmt(cmp.variance_ratio) + " in [" + fmt(cmp.band_low) +
      ", " + fmt(cmp.band_high) + "] (1/rho_hat " + fmt(1.0 / cmp.rho_hat) +
      "): " + pf(cmp.ratio_in_band));
  bool oracle_ok = true;
  if (p.oracle) {
    const sim::EnvConfig& oenv = p.oracle_env_set ? p.oracle_env : p.env;
    const sim::PolicyParams& otheta = p.oracle_theta_set ? p.oracle_theta : p.theta;
    const auto rein = rl::reinforce_batch_gradient(oenv, otheta, p.oracle_baseline,
                                                   rl::GradientMode::Full, p.oracle_reinforce_batch,
                                                   rng::derive(base, 1), jobs);
    const std::uint64_t fd_seed = rng::derive(base, 2);
    const auto fd = rl::finite_difference_gradient(oenv, otheta, p.oracle_epsilon,
                                                   p.oracle_episodes, fd_seed, jobs);
    const auto fd_half = rl::finite_difference_gradient(oenv, otheta, p.oracle_epsilon / 2.0,
                                                        p.oracle_episodes, fd_seed, jobs);
    io::Table t;
    t.name = "gradient_oracle";
    t.columns = {"coord", "reinforce_full", "fd", "fd_half_eps", "rel_error"};
    bool agree = true;
    double diff2 = 0.0, ref2 = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      const double ref = std::abs(fd_half[j]);
      const double rel = ref > 0.0 ? std::abs(rein.mean[j] - fd_half[j]) / ref : 0.0;
      agree = agree && rel <= p.oracle_rel_tolerance;
      diff2 += (fd[j] - fd_half[j]) * (fd[j] - fd_half[j]);
      ref2 += fd_half[j] * fd_half[j];
      t.add_row({std::to_string(j), io::format_double(rein.mean[j]), io::format_double(fd[j]),
                 io::format_double(fd_half[j]), io::format_double(rel)});
    }
    const double consistency = ref2 > 0.0 ? std::sqrt(diff2 / ref2) : 0.0;
    const bool consistent = consistency <= p.oracle_consistency_tolerance;
    result.tables.push_back(std::move(t));
    result.summary_lines.push_back("gradient oracle agreement (<= " +
                                   fmt(p.oracle_rel_tolerance * 100) + "% per coordinate): " +
                                   pf(agree));
    result.summary_lines.push_back("fd self-consistency (eps vs eps/2): " + fmt(consistency * 100) +
                                   "% (<= " + fmt(p.oracle_consistency_tolerance * 100) +
                                   "%): " + pf(consistent));
    oracle_ok = agree && consistent;
  }
  result.pass = cmp.pass && oracle_ok;
}

inline void run_train(const TrainParams& p, std::uint64_t base, std::size_t jobs,
                      ExperimentResult& result) {
  rl::TrainOptions opt = p.options;
  opt.jobs = jobs;
  const auto curve = rl::train(p.env, p.theta0, p.mode, opt, rng::derive(base, 0));
  result.tables.push_back(io::learning_curve_table(curve));

  const double initial = curve.points.empty() ? 0.0 : curve.points.front().eval_conflict_crash_rate;
  const double final_rate = curve.final_eval_conflict_crash_rate;
  result.summary_lines.push_back("train mode: " + std::string(rl::mode_name(p.mode)));
  result.summary_lines.push_back("train iterations: " + std::to_string(curve.points.size()) +
                                 (curve.diverged ? " (diverged: |theta| exceeded bound)" : ""));
  result.summary_lines.push_back("train eval crash rate under conflict: initial " + fmt(initial) +
                                 ", final " + fmt(final_rate));
  bool ok = !curve.diverged;
  if (p.target_eval_crash_rate >= 0.0) {
    const std::size_t reached = rl::iterations_to_target(curve, p.target_eval_crash_rate);
    const bool hit = reached != rl::kTargetNotReached;
    ok = ok && hit;
    result.summary_lines.push_back(
        "train target eval crash rate " + fmt(p.target_eval_crash_rate) +
        (hit ? ": reached at iteration " + std::to_string(reached) : ": not reached") + ": " +
        pf(hit));
  }
  if (p.dump_episodes > 0) {
    const rng::Stream dump_root(rng::derive(base, 9));
    std::vector<sim::Trajectory> batch;
    batch.reserve(p.dump_episodes);
    for (std::size_t i = 0; i < p.dump_episodes; ++i)
      batch.push_back(sim::run_episode(p.env, p.theta0, dump_root.child(i)));
    result.artifacts.emplace_back("trajectories", io::trajectory_batch_to_json(p.env, batch));
  }
  result.pass = ok;
}

}  // namespace detail

inline ExperimentResult run(const ExperimentConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult result;
  result.config = config.to_json();
  const std::uint64_t base =
      rng::experiment_key(config.seed, static_cast<std::uint64_t>(config.kind));
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, VerifyTheoremParams>)
          detail::run_verify_theorem(p, base, config.jobs, result);
        else if constexpr (std::is_same_v<P, SnrSweepParams>)
          detail::run_snr_sweep(p, base, config.jobs, result);
        else if constexpr (std::is_same_v<P, LongtailParams>)
          detail::run_longtail(p, base, config.jobs, result);
        else if constexpr (std::is_same_v<P, IsDimParams>)
          detail::run_is_dim(p, base, config.jobs, result);
        else if constexpr (std::is_same_v<P, GradCompareParams>)
          detail::run_grad_compare(p, base, config.jobs, result);
        else
          detail::run_train(p, base, config.jobs, result);
      },
      config.params);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

inline std::string summarize(const ExperimentResult& result) {
  std::ostringstream out;
  out << "experiment: " << result.config.value("kind", "?") << "\n";
  out << "tool version: " << result.tool_version << "\n";
  out << "seed: " << result.config.value("seed", 0ull) << "\n";
  for (const auto& line : result.summary_lines) out << line << "\n";
  out << "overall: " << (result.pass ? "PASS" : "FAIL") << "\n";
  return out.str();
}

// --- persistence ---------------------------------------------------------------

inline std::string config_hash8(const json& config) {
  const std::string bytes = config.dump();
  std::uint64_t h = 0x6A09E667F3BCC908ULL;
  for (unsigned char c : bytes) h = rng::mix64(h ^ c);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf).substr(0, 8);
}

// <parent>/<UTC timestamp>-<config hash>[-<n>]
inline std::string make_run_dir(const std::string& parent, const json& config) {
  namespace fs = std::filesystem;
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%dT%H%M%SZ", &tm);
  const std::string stem = std::string(stamp) + "-" + config_hash8(config);
  fs::path dir = fs::path(parent) / stem;
  for (int i = 1; fs::exists(dir); ++i) dir = fs::path(parent) / (stem + "-" + std::to_string(i));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create run directory " + dir.string() + ": " + ec.message());
  return dir.string();
}

// Writes the config copy, tables in the requested format, any artifacts,
// and the plain-text summary.  Numeric content is identical across re-runs.
inline void emit_tables(const ExperimentResult& result, const std::string& dir, Format format,
                        const std::string& config_file_bytes) {
  namespace fs = std::filesystem;
  io::write_text_file((fs::path(dir) / "config.json").string(),
                      config_file_bytes.empty() ? result.config.dump(2) + "\n" : config_file_bytes);
  if (format == Format::Csv) {
    for (const auto& t : result.tables)
      io::write_text_file((fs::path(dir) / (t.name + ".csv")).string(), io::to_csv(t));
  } else {
    json records = json::object();
    for (const auto& t : result.tables) records[t.name] = io::to_json(t);
    const json doc{{"config", result.config},
                   {"records", std::move(records)},
                   {"summary", json{{"lines", result.summary_lines},
                                    {"pass", result.pass},
                                    {"tool_version", result.tool_version}}}};
    io::write_text_file((fs::path(dir) / "result.json").string(), doc.dump(2) + "\n");
  }
  for (const auto& [name, payload] : result.artifacts)
    io::write_text_file((fs::path(dir) / (name + ".json")).string(), payload.dump(2) + "\n");
  io::write_text_file((fs::path(dir) / "summary.txt").string(), summarize(result));
}

}  // namespace raregrad::harness
