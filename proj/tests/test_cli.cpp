#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "homlab/cli.hpp"
#include "json.hpp"

using namespace homlab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("homlab_cli_" + name)) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

fs::path write_config(const fs::path& dir, const std::string& text) {
  fs::create_directories(dir);
  const auto p = dir / "run.conf";
  std::ofstream(p) << text;
  return p;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = parse_config("kind = correctors\n# comment\nmedium = cosine  # trailing\norder=2\n");
  CHECK(c.kind == "correctors");
  CHECK(c.get("medium") == "cosine");
  CHECK(c.get_int("order") == 2);
  CHECK(c.get_int("modes") == 24);

  const auto r = parse_config("kind = rate\neps = 0.4, 0.2\n");
  CHECK(r.get_doubles("eps") == std::vector<double>{0.4, 0.2});

  CHECK_THROWS_AS(parse_config("medium = cosine\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("kind = nonsense\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("kind = correctors\ncolour = blue\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("kind = correctors\norder = 3\norder = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("kind = correctors\njust a line\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("kind = correctors\norder = 9\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("kind = correctors\norder = two\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("kind = correctors\nmedium = laminate\ndim = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("kind = rate\neps = 0.4, 0.9\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("kind = mc\ndelta = 1.0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("kind = mc\nk = 4,0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("kind = mc\ndim = 3\nside = 32\nk = 1,0,0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("kind = periodize\nsides = 8, 4\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("kind = mc\ndistribution = gaussian\n"), ConfigError);
  CHECK(experiment_kinds().size() == 7);
}

TEST_CASE("correctors run on the 1d cosine medium") {
  TempDir tmp("correctors");
  std::ostringstream log;
  const auto cfg = write_config(tmp.path, "kind = correctors\nmedium = cosine\norder = 3\nout = " +
                                              (tmp.path / "out").string() + "\n");
  REQUIRE(run_config(cfg, {.log = &log}) == kExitOk);
  const auto rows = read_csv(tmp.path / "out" / "abar.csv");
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == std::vector<std::string>{"order", "tuple", "i", "j", "value"});
  CHECK(std::abs(std::stod(rows[1][4]) - 0.5) <= 1e-8);
  CHECK(std::abs(std::stod(rows[2][4])) <= 1e-8);
  CHECK(std::abs(std::stod(rows[3][4])) <= 1e-8);
  const auto m = read_json(tmp.path / "out" / "manifest.json");
  CHECK(m["status"] == "ok");
  CHECK(m["config"]["order"] == "3");
  CHECK(fs::exists(tmp.path / "out" / "correctors.bin"));

  // Refuses to overwrite without force.
  CHECK(run_config(cfg, {.log = &log}) == kExitValidation);
  CHECK(run_config(cfg, {.force = true, .log = &log}) == kExitOk);
}

TEST_CASE("symbol run on the identity medium") {
  TempDir tmp("symbol");
  std::ostringstream log;
  const auto cfg = write_config(tmp.path, "kind = symbol\nmedium = identity\ndim = 2\nmodes = 3\n");
  REQUIRE(run_config(cfg, {.out = tmp.path / "out", .log = &log}) == kExitOk);
  const auto rows = read_csv(tmp.path / "out" / "symbol.csv");
  REQUIRE(rows.size() > 10);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double x = std::stod(rows[i][0]), y = std::stod(rows[i][1]);
    CHECK(std::abs(std::stod(rows[i][2]) - (x * x + y * y)) <= 1e-12 * (x * x + y * y));
  }
  const auto m = read_json(tmp.path / "out" / "manifest.json");
  CHECK(m["headline"]["band_violations"] == 0);
  CHECK(fs::exists(tmp.path / "out" / "symbol.svg"));
}

TEST_CASE("validation failure leaves no artifacts") {
  TempDir tmp("invalid");
  std::ostringstream log;
  const auto out = tmp.path / "out";
  const auto cfg = write_config(tmp.path, "kind = correctors\nbogus = 1\nout = " + out.string() + "\n");
  CHECK(run_config(cfg, {.log = &log}) == kExitValidation);
  CHECK_FALSE(fs::exists(out));
  CHECK(log.str().find("bogus") != std::string::npos);
  CHECK(run_config(tmp.path / "missing.conf", {.log = &log}) == kExitValidation);

  const auto cfg2 = write_config(tmp.path, "kind = correctors\n");
  CHECK(run_config(cfg2, {.out = out, .seed = 3, .log = &log}) == kExitValidation);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("solver failure exits with 3 and a failed manifest") {
  TempDir tmp("failure");
  std::ostringstream log;
  // Twelve even degrees need six radii; the default design has five.
  const auto cfg = write_config(tmp.path, "kind = taylor\nmedium = cosine\nmax_degree = 12\n");
  CHECK(run_config(cfg, {.out = tmp.path / "out", .log = &log}) == kExitSolver);
  const auto m = read_json(tmp.path / "out" / "manifest.json");
  CHECK(m["status"] == "failed");
  CHECK(m["error"].get<std::string>().size() > 0);
}

TEST_CASE("lattice runs reproduce byte-identical tables") {
  TempDir tmp("repro");
  std::ostringstream log;
  const auto cfg = write_config(tmp.path, "kind = mc\ndim = 1\nside = 2\nk = 1\ndelta = 0.1\nsamples = 64\n");
  REQUIRE(run_config(cfg, {.out = tmp.path / "a", .log = &log}) == kExitOk);
  REQUIRE(run_config(cfg, {.out = tmp.path / "b", .log = &log}) == kExitOk);
  CHECK(slurp(tmp.path / "a" / "mc.csv") == slurp(tmp.path / "b" / "mc.csv"));
  REQUIRE(run_config(cfg, {.out = tmp.path / "c", .seed = 99, .log = &log}) == kExitOk);
  CHECK(slurp(tmp.path / "a" / "mc.csv") != slurp(tmp.path / "c" / "mc.csv"));
  CHECK(read_json(tmp.path / "c" / "manifest.json")["config"]["seed"] == "99");

  const auto pcfg = write_config(tmp.path, "kind = periodize\ndim = 1\nsides = 2, 4\nsamples = 32\n");
  REQUIRE(run_config(pcfg, {.out = tmp.path / "p1", .log = &log}) == kExitOk);
  REQUIRE(run_config(pcfg, {.out = tmp.path / "p2", .log = &log}) == kExitOk);
  CHECK(slurp(tmp.path / "p1" / "periodization.csv") == slurp(tmp.path / "p2" / "periodization.csv"));
}

TEST_CASE("two-scale run") {
  TempDir tmp("twoscale");
  std::ostringstream log;
  const auto cfg = write_config(tmp.path, "kind = two-scale\nmedium = cosine\norder = 2\nperiod = 8\n");
  REQUIRE(run_config(cfg, {.out = tmp.path / "out", .log = &log}) == kExitOk);
  const auto m = read_json(tmp.path / "out" / "manifest.json");
  CHECK(m["headline"]["max_residual"].get<double>() <= 1e-8);
}

TEST_CASE("report") {
  SUBCASE("empty directory") {
    TempDir tmp("report_empty");
    fs::create_directories(tmp.path);
    std::ostringstream log;
    const auto s = emit_report(tmp.path, &log);
    CHECK(s.runs == 0);
    CHECK(s.warnings == 1);
    const auto doc = read_json(tmp.path / "summary.json");
    CHECK(doc["run_count"] == 0);
    CHECK(doc["warning_count"] == 1);
  }

  SUBCASE("rate run headline") {
    TempDir tmp("report_rate");
    std::ostringstream log;
    const auto cfg = write_config(tmp.path / "cfg",
                                  "kind = rate\nmedium = cosine\nmodes = 12\norder = 1\n"
                                  "eps = 0.4, 0.2\nperiod = 8\n");
    REQUIRE(run_config(cfg, {.out = tmp.path / "runs" / "rate", .log = &log}) == kExitOk);
    const auto s = emit_report(tmp.path / "runs", &log);
    CHECK(s.runs == 1);
    CHECK(s.exit_code == kExitOk);
    const auto doc = read_json(tmp.path / "runs" / "summary.json");
    CHECK(doc["runs"][0]["kind"] == "rate");
    CHECK(doc["runs"][0]["headline"].contains("slopes"));
    CHECK(doc["runs"][0]["headline"].contains("ratio_spreads"));
    CHECK(slurp(tmp.path / "runs" / "index.html").find("rate/rate.svg") != std::string::npos);
  }

  SUBCASE("partial failure and missing manifest") {
    TempDir tmp("report_mixed");
    std::ostringstream log;
    const auto ok = write_config(tmp.path / "cfg", "kind = mc\ndim = 1\nside = 2\nk = 1\nsamples = 8\n");
    REQUIRE(run_config(ok, {.out = tmp.path / "runs" / "a", .log = &log}) == kExitOk);
    const auto bad = write_config(tmp.path / "cfg2", "kind = taylor\nmedium = cosine\nmax_degree = 12\n");
    REQUIRE(run_config(bad, {.out = tmp.path / "runs" / "b", .log = &log}) == kExitSolver);
    fs::create_directories(tmp.path / "runs" / "c");
    const auto s = emit_report(tmp.path / "runs", &log);
    CHECK(s.runs == 2);
    CHECK(s.failed == 1);
    CHECK(s.warnings == 1);
    CHECK(s.exit_code == kExitSolver);
    const auto doc = read_json(tmp.path / "runs" / "summary.json");
    CHECK(doc["runs"][1]["status"] == "failed");
  }

  SUBCASE("missing directory") {
    std::ostringstream log;
    CHECK(emit_report(fs::temp_directory_path() / "homlab_cli_nowhere", &log).exit_code == kExitValidation);
  }
}

TEST_CASE("svg plot") {
  TempDir tmp("svg");
  fs::create_directories(tmp.path);
  write_svg_plot(tmp.path / "p.svg", "t", "x", "y", {{"s", {0.1, 0.2, 0.4}, {1e-3, 4e-3, 1.6e-2}}}, true, true);
  const auto text = slurp(tmp.path / "p.svg");
  CHECK(text.rfind("<svg", 0) == 0);
  CHECK(text.find("polyline") != std::string::npos);
}
