#include "doctest.h"

#include <filesystem>
#include <sstream>

#include "gridstate/caseio.hpp"
#include "gridstate/cli.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace gridstate;
using namespace gridstate::testing;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gridstate_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string conf() { return data_path("ieee30.conf"); }

}  // namespace

TEST_CASE("help and argument errors") {
  CHECK(run({"--help"}).code == kExitOk);
  CHECK(run({}).code == kExitValidation);
  CHECK(run({"teleport"}).code == kExitValidation);
  CHECK(run({"powerflow", "--format", "xml"}).code == kExitValidation);
  CHECK(run({"estimate", "--config", conf(), "--mode", "sideways"}).code == kExitValidation);
  CHECK(run({"compare", "--config-a", conf()}).code == kExitValidation);
}

TEST_CASE("powerflow") {
  const fs::path dir = scratch("pf");
  const Run r = run({"powerflow", "--case", data_path("ieee30.case"), "--out", dir.string()});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("converged in") != std::string::npos);
  const std::string csv = read_text((dir / "powerflow.csv").string());
  CHECK(csv.starts_with("# command: powerflow\n"));
  CHECK(csv.find("\nbus,V,theta_deg\n1,1.06,0\n") != std::string::npos);

  CHECK(run({"powerflow", "--case", data_path("ieee30.case"), "--tol", "0"}).code ==
        kExitValidation);
  CHECK(run({"powerflow", "--case", "/nonexistent/x.case"}).code == kExitIo);

  // An overloaded two-bus case cannot be solved.
  const fs::path heavy = dir / "heavy.case";
  write_text(heavy.string(),
             "BUS 1 slack 1 0 0 0 0 0\nBUS 2 load 1 0 5000 2000 0 0\nBRANCH 1 2 0.01 0.1 0 1 0\n");
  const Run bad = run({"powerflow", "--case", heavy.string(), "--out", dir.string()});
  CHECK(bad.code == kExitNumerical);
  CHECK(bad.err.find("mismatch") != std::string::npos);
}

TEST_CASE("synthesize writes one row per measurement") {
  const fs::path dir = scratch("syn");
  const Run r = run({"synthesize", "--config", conf(), "--out", dir.string(), "--format", "json",
                     "--seed", "4"});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(read_text((dir / "measurements.json").string()));
  CHECK(j["manifest"]["seed"] == 4);
  CHECK(j["manifest"]["config_hash"].get<std::string>().size() == 16);
  CHECK(j["measurements"].size() == 2 * 11 + 2 * 48 + 3 + 28);
  CHECK(j["measurements"][0]["kind"] == "P-injection");
}

TEST_CASE("estimate outputs are reproducible") {
  setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  const fs::path a = scratch("est_a");
  const fs::path b = scratch("est_b");
  for (const std::string& fmt : {std::string("csv"), std::string("json")}) {
    REQUIRE(run({"estimate", "--config", conf(), "--out", a.string(), "--format", fmt, "--seed", "7"})
                .code == kExitOk);
    REQUIRE(run({"estimate", "--config", conf(), "--out", b.string(), "--format", fmt, "--seed", "7"})
                .code == kExitOk);
    const std::string file = "estimate." + fmt;
    CHECK(read_text((a / file).string()) == read_text((b / file).string()));
  }
  const std::string csv = read_text((a / "estimate.csv").string());
  CHECK(csv.find("# timestamp: 2023-11-14T22:13:20Z") != std::string::npos);
  unsetenv("SOURCE_DATE_EPOCH");
}

TEST_CASE("a robust run without uncertainty matches the plain one") {
  const fs::path a = scratch("zero_a");
  const fs::path b = scratch("zero_b");
  REQUIRE(run({"estimate", "--config", conf(), "--out", a.string(), "--uncertainty", "0"}).code ==
          kExitOk);
  REQUIRE(run({"estimate", "--config", conf(), "--out", b.string(), "--mode", "multiarea-wls"})
              .code == kExitOk);
  const auto rows = [](const fs::path& d) {
    std::istringstream in(read_text((d / "estimate.csv").string()));
    std::vector<std::vector<std::string>> out;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::vector<std::string> cells;
      std::istringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) cells.push_back(cell);
      out.push_back(cells);
    }
    return out;
  };
  const auto ra = rows(a), rb = rows(b);
  REQUIRE(ra.size() == rb.size());
  REQUIRE(ra.size() > 1);
  // Same numbers; the method label in the header differs.
  for (std::size_t i = 1; i < ra.size(); ++i) {
    REQUIRE(ra[i].size() == rb[i].size());
    for (std::size_t j = 2; j < ra[i].size(); ++j)
      CHECK(std::abs(std::stod(ra[i][j]) - std::stod(rb[i][j])) < 1e-10);
  }
}

TEST_CASE("compare") {
  const fs::path dir = scratch("cmp");
  const Run same = run({"compare", "--config-a", conf(), "--config-b", conf(), "--out",
                        dir.string(), "--format", "json", "--trials", "3"});
  REQUIRE(same.code == kExitOk);
  const auto j = nlohmann::json::parse(read_text((dir / "compare.json").string()));
  const auto& notes = j["manifest"]["notes"];
  CHECK(std::stod(notes["max_abs_difference"].get<std::string>()) == 0.0);
  CHECK(std::stod(notes["win_rate_A_le_B"].get<std::string>()) == 1.0);
  CHECK(j.dump().find("not a statistical comparison") == std::string::npos);

  const Run wls = run({"compare", "--config-a", conf(), "--config-b",
                       data_path("ieee30_wls.conf"), "--out", dir.string(), "--trials", "1"});
  REQUIRE(wls.code == kExitOk);
  CHECK(read_text((dir / "compare.csv").string()).find("single trial; not a statistical comparison") !=
        std::string::npos);

  // Configs over different cases cannot be paired.
  const fs::path other = dir / "other.conf";
  write_text(other.string(), "case = " + data_path("two_bus.case") + "\n");
  CHECK(run({"compare", "--config-a", conf(), "--config-b", other.string()}).code ==
        kExitValidation);
}
