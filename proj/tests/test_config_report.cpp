#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

#include "minmax/config.hpp"
#include "minmax/report.hpp"
#include "minmax/runner.hpp"
#include "support.hpp"

using namespace minmax;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("minmax_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

json tiny_run() {
  return json::parse(R"({
    "problem": "mot",
    "network": {"hidden": 8, "depth": 3},
    "train": {"batch": 16, "iterations": 12, "return_window": 4},
    "regularization": {"mode": "divergence", "c": 5},
    "seeds": [3, 4],
    "stability_window": 6,
    "evaluation": {"samples": 500}
  })");
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MINMAX_MEASURE_BIN) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("preset defaults and overrides") {
    const RunConfig rc = run_config_from_json(tiny_run());
    CHECK(rc.preset == "mot");
    CHECK(rc.train.iterations == 12);
    CHECK(rc.train.return_window == 4);
    CHECK(rc.network.generator_hidden == 8);
    CHECK(rc.train.regularization.mode == RegularizationConfig::Mode::divergence);
    CHECK(rc.seeds == std::vector<std::uint64_t>{3, 4});
    CHECK(rc.evaluation_samples == 500);

    const RunConfig d = run_config_from_json(json{{"problem", "mot"}});
    CHECK(d.train.iterations == 15000);
    CHECK(d.stability_window == 2500);
    CHECK(d.network.discriminator_hidden == 128);
  }
  SUBCASE("unknown keys are rejected with their path") {
    json j = tiny_run();
    j["train"]["itertions"] = 5;
    try {
      run_config_from_json(j);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("itertions") != std::string::npos);
    }
    json k = tiny_run();
    k["problem"] = json{{"preset", "mot"}, {"grid", 3}};
    CHECK_THROWS_AS(run_config_from_json(k), ConfigError);
    json bad = tiny_run();
    bad["regularization"]["mode"] = "entropic";
    CHECK_THROWS_AS(run_config_from_json(bad), ConfigError);
  }
  SUBCASE("settings") {
    TrainConfig t;
    apply_setting(t, "combined");
    CHECK(t.unroll == 5);
    CHECK(t.mixtures == 5);
    apply_setting(t, "base");
    CHECK(t.unroll == 0);
    CHECK(t.mixtures == 1);
    CHECK_THROWS(apply_setting(t, "everything"));
  }
  SUBCASE("the echo parses back to the same configuration") {
    const RunConfig rc = run_config_from_json(tiny_run());
    const json echo = to_json(rc);
    const RunConfig again = run_config_from_json(echo);
    CHECK(to_json(again) == echo);
  }
  SUBCASE("custom problems") {
    const json p = json::parse(R"js({
      "name": "pair", "dim": 2,
      "cost": {"kind": "expression", "expression": "pos(x0 + x1)"},
      "terms": [
        {"name": "m1", "projection": {"kind": "coordinates", "indices": [0]},
         "target": {"kind": "sampler", "coordinates": [{"kind": "normal", "mean": 0, "stddev": 2}]}},
        {"name": "m2", "projection": {"kind": "coordinates", "indices": [1]},
         "target": {"kind": "sampler", "coordinates": [{"kind": "student_t", "df": 8}]}}
      ]
    })js");
    const ProblemInstance q = problem_from_json(p);
    CHECK(q.terms.size() == 2);
    CHECK(q.cost(std::vector<double>{1.0, -0.5}) == 0.5);
    CHECK(problem_from_json(to_json(q)).terms.size() == 2);
  }
}

TEST_CASE("trace csv round trip") {
  const fs::path d = fresh_dir("trace");
  std::vector<TraceRow> rows{{1, 0.5, 0.25, {0.1, -0.2}, {0.0, 1e-17}, 0.5},
                             {2, 1.0 / 3.0, std::nan(""), {0.3, 0.4}, {0.5, 0.6}, 0.41}};
  write_trace_csv(d / "trace.csv", rows, 2);
  const auto back = read_trace_csv(d / "trace.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].phi == rows[1].phi);
  CHECK(std::isnan(back[1].cost_term));
  CHECK(back[0].penalty[1] == 1e-17);
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(-HUGE_VAL) == "-inf");
}

TEST_CASE("runs and reports") {
  const fs::path root = fresh_dir("runs");
  RunConfig rc = run_config_from_json(tiny_run());
  const auto outcomes = run_all(rc, root / "tiny", 2);
  REQUIRE(outcomes.size() == 2);
  CHECK(outcomes[0].seed == 3);
  for (const auto& o : outcomes) {
    CHECK(o.completed());
    CHECK(fs::exists(o.dir / "trace.csv"));
    CHECK(fs::exists(o.dir / "summary.json"));
    CHECK(fs::exists(o.dir / "checkpoint.json"));
    REQUIRE(o.feasibility);
    CHECK(o.feasibility->martingale_error);
  }

  const Report r = build_report(expand_run_dirs({root / "tiny"}));
  REQUIRE(r.rows.size() == 1);
  const AggregateRow& row = r.rows[0];
  CHECK(row.runs == 2);
  CHECK(row.value == doctest::Approx((outcomes[0].reported_value + outcomes[1].reported_value) / 2));

  // stability recomputed from the trace by hand
  for (const auto& run : r.runs) {
    const auto trace = read_trace_csv(run.dir / "trace.csv");
    std::vector<double> tail;
    for (const auto& t : trace) {
      if (t.iter + 6 > trace.back().iter) tail.push_back(t.phi);
    }
    CHECK(run.stability == doctest::Approx(support::population_std(tail)).epsilon(1e-12));
  }

  // idempotent
  const fs::path out1 = root / "report1", out2 = root / "report2";
  write_report(r, out1);
  write_report(build_report(expand_run_dirs({root / "tiny"})), out2);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(slurp(out1 / "aggregate.csv") == slurp(out2 / "aggregate.csv"));
  CHECK(slurp(out1 / "aggregate.csv").rfind("label,runs,aborted,value", 0) == 0);
  CHECK(fs::exists(out1 / (row.label + "_median.svg")));

  // a missing run is listed, not fatal
  fs::create_directories(root / "tiny" / "seed_99");
  const Report partial = build_report(expand_run_dirs({root / "tiny"}));
  CHECK(partial.missing.size() == 1);
  CHECK_THROWS(build_report({}));

  CHECK(median_index({3.0, 1.0, 2.0}) == 2);
  CHECK(median_index({4.0, 1.0, 3.0, 2.0}) == 3);
}

TEST_CASE("cli exit codes") {
  const fs::path root = fresh_dir("cli");
  std::ofstream(root / "bad.json") << R"({"problem": "mot", "bogus": 1})";
  CHECK(run_cli("train --config " + (root / "bad.json").string()) == 1);
  CHECK(run_cli("train --preset nowhere") == 1);
  CHECK(run_cli("train --preset mot --iterations 3 --batch 8 --hidden 4 --quiet --out " +
                (root / "ok").string()) == 0);
  CHECK(fs::exists(root / "ok" / "seed_0" / "summary.json"));
  CHECK(run_cli("evaluate " + (root / "ok" / "seed_0").string() + " --samples 200") == 0);
  CHECK(run_cli("report " + (root / "ok").string() + " --out " + (root / "rep").string()) == 0);
  CHECK(fs::exists(root / "rep" / "aggregate.csv"));
  CHECK(run_cli("oracle --preset mot --grid 6") == 0);
  CHECK(run_cli("oracle --preset dcot --grid 20") == 3);
}
