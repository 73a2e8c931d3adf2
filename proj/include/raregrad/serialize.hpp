#pragma once

// JSON/CSV serialization of every record the harness persists.
//
// Numeric fields must round-trip exactly: CSV floats are printed with %.17g
// and JSON numbers use the library's shortest-round-trip encoding, so a
// re-run with the same config reproduces output files byte for byte.

#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "raregrad/driving.hpp"
#include "raregrad/mixture.hpp"
#include "raregrad/reinforce.hpp"
#include "raregrad/scaling.hpp"
#include "raregrad/verification.hpp"

namespace raregrad::io {

using nlohmann::json;

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// --- enum names ------------------------------------------------------------

inline const char* family_name(core::ComponentFamily f) {
  return f == core::ComponentFamily::Gaussian ? "gaussian" : "uniform";
}

inline core::ComponentFamily family_from(const std::string& s) {
  if (s == "gaussian") return core::ComponentFamily::Gaussian;
  if (s == "uniform") return core::ComponentFamily::Uniform;
  throw std::invalid_argument("unknown component family: " + s);
}

inline const char* outcome_name(sim::Outcome o) {
  switch (o) {
    case sim::Outcome::Uneventful: return "uneventful";
    case sim::Outcome::NearMiss: return "near-miss";
    case sim::Outcome::Crash: return "crash";
  }
  return "?";
}

inline rl::GradientMode mode_from(const std::string& s) {
  if (s == "full") return rl::GradientMode::Full;
  if (s == "filtered-episode") return rl::GradientMode::FilteredEpisode;
  if (s == "filtered-window") return rl::GradientMode::FilteredWindow;
  throw std::invalid_argument("unknown gradient mode: " + s);
}

// --- json for domain types ---------------------------------------------------

inline json to_json(const core::MixtureSpec& spec) {
  return json{{"rho_b", spec.rho_b},
              {"mean_b", spec.mean_b},
              {"var_a", spec.var_a},
              {"var_b", spec.var_b},
              {"family", family_name(spec.family)}};
}

inline json to_json(const sim::EnvConfig& cfg) {
  return json{{"conflict_prob", cfg.conflict_prob},
              {"horizon", cfg.horizon},
              {"dt", cfg.dt},
              {"init_gap", cfg.init_gap},
              {"init_speed", cfg.init_speed},
              {"lead_decel", cfg.lead_decel},
              {"ego_decel", cfg.ego_decel},
              {"near_miss_gap", cfg.near_miss_gap},
              {"crash_penalty", cfg.crash_penalty},
              {"effort_coeff", cfg.effort_coeff},
              {"feature_gap_ref", cfg.feature_gap_ref}};
}

// --- tables ------------------------------------------------------------------

// A named table with string cells; floats are pre-formatted with %.17g so
// CSV and JSON carry identical digits.
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row) {
    if (row.size() != columns.size())
      throw std::invalid_argument("Table " + name + ": row width mismatch");
    rows.push_back(std::move(row));
  }
};

inline std::string to_csv(const Table& t) {
  std::ostringstream out;
  for (std::size_t c = 0; c < t.columns.size(); ++c)
    out << t.columns[c] << (c + 1 < t.columns.size() ? "," : "");
  out << "\n";
  for (const auto& row : t.rows) {
    for (std::size_t c = 0; c < row.size(); ++c)
      out << row[c] << (c + 1 < row.size() ? "," : "");
    out << "\n";
  }
  return out.str();
}

inline json to_json(const Table& t) {
  json rows = json::array();
  for (const auto& row : t.rows) {
    json r = json::object();
    for (std::size_t c = 0; c < t.columns.size(); ++c) r[t.columns[c]] = row[c];
    rows.push_back(std::move(r));
  }
  return json{{"name", t.name}, {"columns", t.columns}, {"rows", std::move(rows)}};
}

// --- record tables -------------------------------------------------------------

inline Table reports_table(std::span<const verify::VerificationReport> reports) {
  Table t;
  t.name = "reports";
  t.columns = {"property",  "rho_b",      "dim",  "batch_size", "trials",
               "seed",      "tolerance",  "pass", "empirical",  "closed_form"};
  for (const auto& r : reports) {
    auto join = [](const std::vector<double>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ';';
        s += format_double(v[i]);
      }
      return s;
    };
    t.add_row({verify::property_name(r.property), format_double(r.spec.rho_b),
               std::to_string(r.spec.dim()), std::to_string(r.batch_size),
               std::to_string(r.trials), std::to_string(r.seed), format_double(r.tolerance),
               r.pass ? "true" : "false", join(r.empirical), join(r.closed_form)});
  }
  return t;
}

inline Table curve_table(const std::string& name, const std::string& x_name,
                         const std::string& y_name, const verify::ScalingCurve& curve) {
  Table t;
  t.name = name;
  const bool has_rel_se = !curve.rel_se.empty();
  t.columns = {x_name, y_name};
  if (has_rel_se) {
    t.columns.push_back("rel_se");
    t.columns.push_back("reliable");
  }
  for (std::size_t i = 0; i < curve.x_values.size(); ++i) {
    std::vector<std::string> row{format_double(curve.x_values[i]),
                                 format_double(curve.y_values[i])};
    if (has_rel_se) {
      row.push_back(format_double(curve.rel_se[i]));
      row.push_back(curve.reliable[i] ? "true" : "false");
    }
    t.add_row(std::move(row));
  }
  return t;
}

inline Table longtail_table(std::span<const double> rho_grid, const verify::ScalingCurve& mu1,
                            const verify::ScalingCurve& mu2) {
  Table t;
  t.name = "longtail";
  t.columns = {"rho_b", "required_n_mu1", "required_n_mu2"};
  for (std::size_t i = 0; i < rho_grid.size(); ++i)
    t.add_row({format_double(rho_grid[i]), format_double(mu1.y_values[i]),
               format_double(mu2.y_values[i])});
  return t;
}

inline Table comparison_table(const rl::GradientComparison& c) {
  Table t;
  t.name = "grad_compare";
  t.columns = {"batch",      "trials",     "seed",          "rho_hat",       "var_full",
               "var_filtered", "variance_ratio", "band_low",  "band_high",
               "means_agree", "ratio_in_band", "pass"};
  t.add_row({std::to_string(c.batch), std::to_string(c.trials), std::to_string(c.seed),
             format_double(c.rho_hat), format_double(c.var_full), format_double(c.var_filtered),
             format_double(c.variance_ratio), format_double(c.band_low),
             format_double(c.band_high), c.means_agree ? "true" : "false",
             c.ratio_in_band ? "true" : "false", c.pass ? "true" : "false"});
  return t;
}

inline Table comparison_means_table(const rl::GradientComparison& c) {
  Table t;
  t.name = "grad_compare_means";
  t.columns = {"coord", "mean_full", "mean_filtered", "diff_se"};
  for (std::size_t j = 0; j < 3; ++j)
    t.add_row({std::to_string(j), format_double(c.mean_full[j]),
               format_double(c.mean_filtered[j]), format_double(c.diff_se[j])});
  return t;
}

inline Table learning_curve_table(const rl::LearningCurve& curve) {
  Table t;
  t.name = "learning_curve";
  t.columns = {"iter",    "theta_0", "theta_1",          "theta_2",
               "baseline", "crash_rate_batch", "eval_conflict_crash_rate",
               "grad_0",  "grad_1",  "grad_2",           "grad_sample_variance"};
  for (const auto& p : curve.points)
    t.add_row({std::to_string(p.iter), format_double(p.theta[0]), format_double(p.theta[1]),
               format_double(p.theta[2]), format_double(p.baseline),
               format_double(p.crash_rate_batch), format_double(p.eval_conflict_crash_rate),
               format_double(p.gradient.mean[0]), format_double(p.gradient.mean[1]),
               format_double(p.gradient.mean[2]), format_double(p.gradient.sample_variance)});
  return t;
}

// --- trajectory dump ------------------------------------------------------------
//
// One file per batch; the schema keeps every step field so episodes can be
// replayed as golden fixtures.

inline json trajectory_to_json(const sim::Trajectory& traj) {
  json steps = json::array();
  for (const auto& s : traj.steps)
    steps.push_back(json{{"gap", s.gap},
                         {"ego_speed", s.ego_speed},
                         {"lead_speed", s.lead_speed},
                         {"brake", s.brake},
                         {"brake_prob", s.brake_prob},
                         {"score", s.score},
                         {"dprob", s.dprob},
                         {"reward", s.reward}});
  json j{{"outcome", outcome_name(traj.outcome)},
         {"total_return", traj.total_return},
         {"steps", std::move(steps)}};
  if (traj.conflict_onset) j["conflict_onset"] = *traj.conflict_onset;
  if (traj.critical_window)
    j["critical_window"] = json{{"first", traj.critical_window->first},
                                {"last", traj.critical_window->last}};
  return j;
}

inline sim::Trajectory trajectory_from_json(const json& j) {
  sim::Trajectory traj;
  const std::string outcome = j.at("outcome").get<std::string>();
  if (outcome == "uneventful")
    traj.outcome = sim::Outcome::Uneventful;
  else if (outcome == "near-miss")
    traj.outcome = sim::Outcome::NearMiss;
  else if (outcome == "crash")
    traj.outcome = sim::Outcome::Crash;
  else
    throw std::invalid_argument("unknown outcome: " + outcome);
  traj.total_return = j.at("total_return").get<double>();
  if (j.contains("conflict_onset")) traj.conflict_onset = j.at("conflict_onset").get<int>();
  if (j.contains("critical_window"))
    traj.critical_window = sim::StepRange{j.at("critical_window").at("first").get<int>(),
                                          j.at("critical_window").at("last").get<int>()};
  for (const auto& sj : j.at("steps")) {
    sim::Step s;
    s.gap = sj.at("gap").get<double>();
    s.ego_speed = sj.at("ego_speed").get<double>();
    s.lead_speed = sj.at("lead_speed").get<double>();
    s.brake = sj.at("brake").get<int>();
    s.brake_prob = sj.at("brake_prob").get<double>();
    s.score = sj.at("score").get<sim::Vec3>();
    s.dprob = sj.at("dprob").get<sim::Vec3>();
    s.reward = sj.at("reward").get<double>();
    traj.steps.push_back(s);
  }
  return traj;
}

inline json trajectory_batch_to_json(const sim::EnvConfig& cfg,
                                     std::span<const sim::Trajectory> batch) {
  json episodes = json::array();
  for (const auto& traj : batch) episodes.push_back(trajectory_to_json(traj));
  return json{{"version", 1}, {"env", to_json(cfg)}, {"episodes", std::move(episodes)}};
}

inline std::vector<sim::Trajectory> trajectory_batch_from_json(const json& j) {
  std::vector<sim::Trajectory> batch;
  for (const auto& ej : j.at("episodes")) batch.push_back(trajectory_from_json(ej));
  return batch;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace raregrad::io
