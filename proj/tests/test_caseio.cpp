#include "doctest.h"

#include <cstdlib>

#include "gridstate/caseio.hpp"
#include "json.hpp"
#include "gridstate/errors.hpp"
#include "support.hpp"

using namespace gridstate;
using namespace gridstate::testing;

namespace {

std::size_t parse_error_line(auto&& fn) {
  try {
    fn();
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST_CASE("case files") {
  const std::string text =
      "# two buses\n"
      "BASEMVA 50\n"
      "BUS 1 slack 1.02 0 0 0 0 0\n"
      "BUS 2 load 1 -0.1 40 10 0 5   # trailing comment\n"
      "BRANCH 1 2 0.01 0.1 0.02 0.98 0\n";
  const PowerNetwork net = parse_case(text);
  CHECK(net.base_mva() == 50.0);
  CHECK(net.size() == 2);
  CHECK(net.bus(2).pd == 40.0);
  CHECK(net.bus(2).bs == 5.0);
  CHECK(net.branches()[0].tap == 0.98);
  CHECK(parse_case(render_case(net)) == net);

  SUBCASE("the shipped case round-trips") {
    const PowerNetwork ieee = ieee30();
    CHECK(ieee.size() == 30);
    CHECK(ieee.branches().size() == 41);
    CHECK(parse_case(render_case(ieee)) == ieee);
  }
  SUBCASE("BASEMVA defaults to 100") {
    CHECK(parse_case("BUS 1 slack 1 0 0 0 0 0\n").base_mva() == 100.0);
  }
  SUBCASE("errors carry the line") {
    CHECK(parse_error_line([] { parse_case("BUS 1 slack 1 0 0 0 0\n"); }) == 1);
    CHECK(parse_error_line([] { parse_case("BASEMVA 100\nBUS 1 slack 1 0 x 0 0 0\n"); }) == 2);
    CHECK(parse_error_line([] { parse_case("\n\nLINE 1 2\n"); }) == 3);
    CHECK(parse_error_line([] { parse_case("BUS 1 swing 1 0 0 0 0 0\n"); }) == 1);
    CHECK(parse_error_line([] { parse_case("BUS 1 slack 1 0 0 0 0 0 5\n"); }) == 1);
    CHECK_THROWS_AS(parse_case(""), ParseError);
    CHECK_THROWS_AS(parse_case("# only a comment\n"), ParseError);
  }
  SUBCASE("duplicate bus ids name both lines") {
    try {
      parse_case("BUS 1 slack 1 0 0 0 0 0\nBUS 1 load 1 0 0 0 0 0\n");
      FAIL("expected a structural error");
    } catch (const StructuralError& e) {
      const std::string what = e.what();
      CHECK(what.find("line 2") != std::string::npos);
      CHECK(what.find("line 1") != std::string::npos);
    }
  }
}

TEST_CASE("partition files") {
  const PartitionSpec spec = parse_partition("AREA 1 REF 2 : 1,2\nAREA 2 REF 3 : 3, 4\n");
  CHECK(spec.assignment == std::map<int, int>{{1, 1}, {2, 1}, {3, 2}, {4, 2}});
  CHECK(spec.references == std::map<int, int>{{1, 2}, {2, 3}});
  CHECK(parse_error_line([] { parse_partition("AREA 1 REF 2 1,2\n"); }) == 1);
  CHECK(parse_error_line([] { parse_partition("AREA 1 REF 2 : 1\nAREA 2 REF 1 : 1\n"); }) == 2);
  CHECK(parse_error_line([] { parse_partition("AREA 1 REF 2 : 1\nAREA 1 REF 3 : 3\n"); }) == 2);
  CHECK(parse_error_line([] { parse_partition("AREA 1 REF 2 : 1,,2\n"); }) == 1);
  CHECK_THROWS_AS(parse_partition(""), ParseError);
}

TEST_CASE("measurement plan files") {
  const MeasurementPlan plan = parse_plan("INJ 4\nFLOW 1 2\nFLOW 2 3 3\nVMAG 4\nPMU 4\n");
  CHECK(plan.injections == std::vector<int>{4});
  REQUIRE(plan.flows.size() == 2);
  CHECK(plan.flows[0].side == 1);
  CHECK(plan.flows[1].side == 3);
  CHECK(plan.voltages == std::vector<int>{4});
  CHECK(plan.pmus == std::vector<int>{4});
  CHECK(parse_plan(render_plan(plan)) == plan);
  CHECK(parse_error_line([] { parse_plan("INJ 1\nFLOW 1 2 5\n"); }) == 2);
  CHECK(parse_error_line([] { parse_plan("PMU\n"); }) == 1);
  CHECK(parse_plan(render_plan(ieee30_plan())) == ieee30_plan());
}

TEST_CASE("configuration") {
  const ExperimentConfig defaults = parse_config("");
  CHECK(defaults.sigmas.injection == 0.01);
  CHECK(defaults.sigmas.flow == 0.008);
  CHECK(defaults.sigmas.pmu == 0.001);
  CHECK(defaults.uncertainty.s0 == 0.05);
  CHECK(defaults.uncertainty.e0 == 0.05);
  CHECK(defaults.mode == "multiarea-robust");

  const ExperimentConfig c = parse_config(
      "# comment\n"
      "sigma_flow = 0.02\n"
      "lambda_exact = true\n"
      "trials=5\n"
      "seed = 12345678901\n"
      "mode = central-wls\n"
      "reuse_boundary_measurements = false\n");
  CHECK(c.sigmas.flow == 0.02);
  CHECK(c.lambda_exact);
  CHECK(c.trials == 5);
  CHECK(c.seed == 12345678901ull);
  CHECK(c.mode == "central-wls");
  CHECK_FALSE(c.reuse_boundary_measurements);

  CHECK_THROWS_AS(parse_config("sigma_pmu = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("sigma_injection = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("trials = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("epsilon = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("colour = blue\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("mode = sideways\n"), ConfigError);
  CHECK(parse_error_line([] { parse_config("mu = 1\nmu = 2\n"); }) == 2);
  CHECK(parse_error_line([] { parse_config("trials 4\n"); }) == 1);
  CHECK(parse_error_line([] { parse_config("lambda_exact = maybe\n"); }) == 1);
}

TEST_CASE("redundancy of the shipped plan") {
  const PowerNetwork net = ieee30();
  const AreaPartition part = three_areas(net);
  const auto eta = redundancy(net, part, ieee30_plan());
  REQUIRE(eta.size() == 3);
  // Injection and flow pairs plus one voltage magnitude per area.
  CHECK(eta[0].measurements == 2 * 3 + 2 * 15 + 1);
  CHECK(eta[1].measurements == 2 * 5 + 2 * 21 + 1);
  CHECK(eta[2].measurements == 2 * 3 + 2 * 12 + 1);
  CHECK(eta[0].states == 23);
  CHECK(eta[1].states == 35);
  CHECK(eta[2].states == 23);
  for (const Redundancy& r : eta) CHECK(r.eta >= 1.3);

  ExperimentConfig config;
  MeasurementPlan sparse;
  sparse.injections = {1};
  check_redundancy(config, net, part, sparse);
  CHECK(config.warnings.size() == 3);
}

TEST_CASE("content hash and manifest timestamp") {
  CHECK(content_hash("") == "cbf29ce484222325");
  CHECK(content_hash("a") == "af63dc4c8601ec8c");
  CHECK(content_hash("foobar") == "85944171f73967e8");

  const char* saved = std::getenv("SOURCE_DATE_EPOCH");
  const std::string keep = saved ? saved : "";
  setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  CHECK(manifest_timestamp() == "2023-11-14T22:13:20Z");
  unsetenv("SOURCE_DATE_EPOCH");
  CHECK(manifest_timestamp() == "unset");
  if (saved) setenv("SOURCE_DATE_EPOCH", keep.c_str(), 1);
}

TEST_CASE("missing files are I/O errors") {
  CHECK_THROWS_AS(read_text("/nonexistent/ieee30.case"), IoError);
  CHECK_THROWS_AS(write_text("/nonexistent/dir/out.csv", "x"), IoError);
}

TEST_CASE("result rendering") {
  const Scenario s = ieee30_scenario();
  const TrialInput trial = draw_trial(s, 3);
  MethodSpec wls{"wls", MethodSpec::Scope::MultiArea, {}};
  wls.options.robust = false;
  wls.options.uncertainty = UncertaintyScales{};
  GlobalResult g = run_method(s, wls, trial);
  g.method = "wls";
  const ResultTable table = tabulate({g}, s.truth, s.part);
  // 12 + 18 + 12 area rows, 11 coordinator rows, 30 final rows.
  CHECK(table.rows.size() == 12 + 18 + 12 + 11 + 30);
  CHECK(table.rows.front().scope == "area1");
  CHECK(table.rows.back().scope == "final");

  Manifest m;
  m.command = "estimate";
  m.config_hash = content_hash("");
  m.seed = 3;
  m.timestamp = "unset";
  m.fixtures = {{"ieee30.case", "0"}};
  const std::string csv = render_results(table, m, ResultFormat::Csv);
  CHECK(csv.starts_with("# command: estimate\n"));
  CHECK(csv.find("\nscope,bus,true_V,true_theta_deg,wls_V,wls_theta_deg,wls_abs_err_V,"
                 "wls_abs_err_theta_deg\n") != std::string::npos);
  CHECK(csv == render_results(table, m, ResultFormat::Csv));

  const std::string json = render_results(table, m, ResultFormat::Json);
  const auto parsed = nlohmann::json::parse(json);
  CHECK(parsed["manifest"]["seed"] == 3);
  CHECK(parsed["rows"].size() == table.rows.size());
  CHECK(parsed["rows"][0]["methods"].contains("wls"));
}
