#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>

#include "raregrad/experiment.hpp"

using namespace raregrad;
using harness::ExperimentConfig;
namespace fs = std::filesystem;

namespace {

io::json minimal_verify_config() {
  return io::json{
      {"version", 1},
      {"kind", "verify-theorem"},
      {"seed", 99},
      {"spec", {{"rho_b", 0.05}, {"mean_b", {1.0}}, {"var_a", 2.0}, {"var_b", 1.0}}},
      {"unbiasedness", {{"batch_size", 200}, {"trials", 200}}},
      {"variance_ordering", {{"batch_size", 200}, {"trials", 400}, {"rel_tolerance", 0.25}}},
      {"rho_factor",
       {{"rho_grid", {0.5, 0.05}}, {"batch_size", 200}, {"trials", 400}, {"rel_tolerance", 0.25}}},
      {"assumption_residual", {{"samples", 100000}, {"tolerance", 0.02}}},
  };
}

struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<unsigned> counter{0};
    path = fs::temp_directory_path() / ("raregrad_test_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter.fetch_add(1)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

}  // namespace

TEST_CASE("config validation errors name the offending field") {
  auto j = minimal_verify_config();
  SECTION("missing top-level fields") {
    j.erase("kind");
    CHECK_THROWS_WITH(ExperimentConfig::from_json(j), Catch::Matchers::ContainsSubstring("kind"));
    j = minimal_verify_config();
    j.erase("seed");
    CHECK_THROWS_WITH(ExperimentConfig::from_json(j), Catch::Matchers::ContainsSubstring("seed"));
  }
  SECTION("unknown kind") {
    j["kind"] = "nonsense";
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), harness::ConfigError);
  }
  SECTION("out-of-range rho_b") {
    j["spec"]["rho_b"] = 1.5;
    CHECK_THROWS_WITH(ExperimentConfig::from_json(j), Catch::Matchers::ContainsSubstring("rho_b"));
  }
  SECTION("wrong type") {
    j["spec"]["var_a"] = "two";
    CHECK_THROWS_WITH(ExperimentConfig::from_json(j), Catch::Matchers::ContainsSubstring("var_a"));
  }
  SECTION("unsupported version") {
    j["version"] = 7;
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), harness::ConfigError);
  }
  SECTION("bad train mode") {
    io::json t{{"version", 1},   {"kind", "train"},        {"seed", 1},
               {"env", io::json::object()}, {"theta0", {0.0, 1.0, -5.0}}, {"mode", "sideways"},
               {"iterations", 1}, {"batch", 10},            {"learning_rate", 0.1}};
    CHECK_THROWS_AS(ExperimentConfig::from_json(t), std::invalid_argument);
  }
}

TEST_CASE("config round-trips through its serialization") {
  const auto parsed = ExperimentConfig::from_json(minimal_verify_config());
  const auto again = ExperimentConfig::from_json(parsed.to_json());
  CHECK(parsed.to_json() == again.to_json());
}

TEST_CASE("verify-theorem run passes and summarizes per property") {
  const auto config = ExperimentConfig::from_json(minimal_verify_config());
  const auto result = harness::run(config);
  CHECK(result.pass);
  REQUIRE(result.tables.size() == 1);
  CHECK(result.tables[0].name == "reports");
  CHECK(result.tables[0].rows.size() == 5);  // unbiasedness, ordering, 2 rho points, residual
  const auto text = harness::summarize(result);
  CHECK_THAT(text, Catch::Matchers::ContainsSubstring("unbiasedness: PASS"));
  CHECK_THAT(text, Catch::Matchers::ContainsSubstring("variance ordering: PASS"));
  CHECK_THAT(text, Catch::Matchers::ContainsSubstring("rho factor: PASS"));
  CHECK_THAT(text, Catch::Matchers::ContainsSubstring("overall: PASS"));
}

TEST_CASE("an impossible tolerance produces a FAIL summary and nonzero gate") {
  auto j = minimal_verify_config();
  j["unbiasedness"]["z"] = 1e-6;  // no estimate lands within a millionth of an SE
  const auto result = harness::run(ExperimentConfig::from_json(j));
  CHECK_FALSE(result.pass);
  const auto text = harness::summarize(result);
  CHECK_THAT(text, Catch::Matchers::ContainsSubstring("unbiasedness: FAIL"));
  CHECK_THAT(text, Catch::Matchers::ContainsSubstring("overall: FAIL"));
}

TEST_CASE("numeric outputs are byte-identical across runs and jobs") {
  auto j = minimal_verify_config();
  const auto config1 = ExperimentConfig::from_json(j);
  j["jobs"] = 3;
  const auto config3 = ExperimentConfig::from_json(j);

  TempDir d1, d2;
  harness::emit_tables(harness::run(config1), d1.path.string(), harness::Format::Csv, "");
  harness::emit_tables(harness::run(config3), d2.path.string(), harness::Format::Csv, "");
  const auto a = io::read_text_file((d1.path / "reports.csv").string());
  const auto b = io::read_text_file((d2.path / "reports.csv").string());
  CHECK(a == b);
}

TEST_CASE("emitted JSON re-emits byte-identically") {
  const auto config = ExperimentConfig::from_json(minimal_verify_config());
  const auto result = harness::run(config);
  TempDir d;
  harness::emit_tables(result, d.path.string(), harness::Format::Json, "");
  const auto first = io::read_text_file((d.path / "result.json").string());
  const auto doc = io::json::parse(first);
  CHECK(doc.contains("config"));
  CHECK(doc.contains("records"));
  CHECK(doc.contains("summary"));
  CHECK(doc.dump(2) + "\n" == first);  // parse then re-emit reproduces the bytes
}

TEST_CASE("the config file is copied verbatim into the run directory") {
  const auto config = ExperimentConfig::from_json(minimal_verify_config());
  const auto result = harness::run(config);
  TempDir d;
  const std::string raw = "{ \"exact\": \"bytes\" }\n";
  harness::emit_tables(result, d.path.string(), harness::Format::Csv, raw);
  CHECK(io::read_text_file((d.path / "config.json").string()) == raw);
  CHECK(fs::exists(d.path / "summary.txt"));
}

TEST_CASE("run directories are unique per invocation") {
  TempDir parent;
  const auto cfg = minimal_verify_config();
  const auto d1 = harness::make_run_dir(parent.path.string(), cfg);
  const auto d2 = harness::make_run_dir(parent.path.string(), cfg);
  CHECK(d1 != d2);
  CHECK(fs::exists(d1));
  CHECK(fs::exists(d2));
}

TEST_CASE("longtail run emits the curve table and slope gates") {
  io::json j{{"version", 1},         {"kind", "longtail"}, {"seed", 5},
             {"rho_min", 1e-4},      {"rho_max", 0.1},     {"points", 13},
             {"var_a", 2.0},         {"relative_error", 0.1}, {"z", 2.0}};
  const auto result = harness::run(ExperimentConfig::from_json(j));
  CHECK(result.pass);
  REQUIRE(result.tables.size() == 1);
  CHECK(result.tables[0].name == "longtail");
  CHECK(result.tables[0].columns ==
        std::vector<std::string>{"rho_b", "required_n_mu1", "required_n_mu2"});
  CHECK(result.tables[0].rows.size() == 13);
}

TEST_CASE("snr sweep and is-dim runs pass at unit-test scale") {
  io::json s{{"version", 1}, {"kind", "snr-sweep"}, {"seed", 4},
             {"rho_grid", {0.1, 0.01}}, {"samples", 400000}, {"rel_tolerance", 0.10}};
  CHECK(harness::run(ExperimentConfig::from_json(s)).pass);

  io::json d{{"version", 1}, {"kind", "is-dim"}, {"seed", 8},
             {"dim_grid", {1, 2, 4, 8}}, {"shift", 0.5}, {"n", 100000}, {"trials", 2},
             {"slope_rel_tolerance", 0.2}, {"r2_min", 0.9},
             {"unit_check_n", 100000}, {"unit_check_trials", 2}};
  const auto result = harness::run(ExperimentConfig::from_json(d));
  CHECK(result.pass);
  CHECK(result.tables[0].columns[1] == "w2_mean");
}

TEST_CASE("train run records the learning curve and can dump trajectories") {
  io::json j{{"version", 1},
             {"kind", "train"},
             {"seed", 3},
             {"env", {{"conflict_prob", 0.05}, {"near_miss_gap", 5.0}}},
             {"theta0", {0.0, 1.1, -5.0}},
             {"mode", "filtered-window"},
             {"iterations", 3},
             {"batch", 100},
             {"learning_rate", 0.1},
             {"eval_episodes", 50},
             {"dump_episodes", 4}};
  const auto result = harness::run(ExperimentConfig::from_json(j));
  CHECK(result.pass);
  REQUIRE(result.tables.size() == 1);
  CHECK(result.tables[0].rows.size() == 3);
  REQUIRE(result.artifacts.size() == 1);
  CHECK(result.artifacts[0].first == "trajectories");
  const auto batch = io::trajectory_batch_from_json(result.artifacts[0].second);
  CHECK(batch.size() == 4);

  TempDir d;
  harness::emit_tables(result, d.path.string(), harness::Format::Csv, "");
  CHECK(fs::exists(d.path / "trajectories.json"));
  CHECK(fs::exists(d.path / "learning_curve.csv"));
}

TEST_CASE("grad-compare run at unit-test scale") {
  io::json j{{"version", 1},
             {"kind", "grad-compare"},
             {"seed", 4242},
             {"env",
              {{"conflict_prob", 0.01},
               {"horizon", 200},
               {"init_gap", 25.0},
               {"lead_decel", 10.0},
               {"near_miss_gap", 12.0}}},
             {"theta", {0.0, 1.0, -3.8}},
             {"baseline", 3.0},
             {"batch", 1000},
             {"trials", 60},
             {"oracle", {{"enabled", false}}}};
  const auto result = harness::run(ExperimentConfig::from_json(j));
  const auto text = harness::summarize(result);
  CHECK_THAT(text, Catch::Matchers::ContainsSubstring("grad-compare unbiasedness: PASS"));
  REQUIRE(result.tables.size() == 2);
  CHECK(result.tables[0].name == "grad_compare");
  CHECK(result.tables[1].name == "grad_compare_means");
}
