#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "marcus/config.hpp"
#include "marcus/run.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

using namespace marcus;
namespace fs = std::filesystem;

namespace {

const char* kSolve = R"({
  "model": "example1",
  "driver": {"b": 0, "jumps": [{"type": "stable", "alpha": 1.5}]},
  "initial": {"type": "normal", "mean": 1, "sd": 0.25},
  "grid": {"lower": -4, "upper": 4, "cells": 64}
})";

const char* kCompare = R"({
  "model": {"id": "example1", "drift": {"family": "linear", "matrix": -1}},
  "driver": {"b": 0, "jumps": [{"type": "compound_poisson", "lambda": 1,
             "rho": {"family": "normal", "mean": 0, "sd": 0.3}}]},
  "initial": {"type": "normal", "mean": 0.5, "sd": 0.5},
  "T": 0.2, "dt": 0.01, "n_paths": 2000, "seed": 5, "threads": 2,
  "grid": {"lower": -4, "upper": 4, "cells": 32}
})";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("marcus_test_config_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string message(const std::string& text) {
  try {
    config::parse_config(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "marcusfpe");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run::run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("defaults") {
  const auto c = config::parse_config(kSolve);
  CHECK(c.epsilon == 1e-2);
  CHECK(c.outer_cutoff == 100.0);
  CHECK(c.steps == 50);
  CHECK(c.T == 1.0);
  CHECK(c.renormalize);
  CHECK(c.gather == fpe::JumpGather::CellAverage);
  CHECK_FALSE(c.n_paths.has_value());
  REQUIRE(c.grid.has_value());
  CHECK(c.grid->axis(0).cells == 64);
  CHECK(c.model.d() == 1);
  CHECK_NOTHROW(config::require_for_task(c, "solve"));
  const auto so = c.solve();
  CHECK(so.quadrature.epsilon == 1e-2);
  CHECK(so.quadrature.outer_cutoff == 100.0);
}

TEST_CASE("validation messages name the key") {
  std::string bad = kSolve;
  bad.replace(bad.find("1.5"), 3, "2.5");
  const std::string m = message(bad);
  CHECK(m.find("alpha") != std::string::npos);
  CHECK(m.find("driver") != std::string::npos);

  CHECK(message(R"({"model": "example1", "driver": {"b": 0}, "grid": {"lower": 0, "upper": 1, "cells": 8, "cell": 9}})")
            .find("grid.cell: unknown key") != std::string::npos);
  CHECK(message(R"({"model": "example9", "driver": {}})").find("unknown model") != std::string::npos);
  const std::string syntax = message("{\n  \"model\": \"example1\",\n  \"T\": ,\n}");
  CHECK(syntax.find("line 3") != std::string::npos);
  CHECK(message(R"({"model": "example1", "driver": {"b": 0}, "jump_gather": "nearest"})").find("jump_gather") !=
        std::string::npos);
}

TEST_CASE("task requirements") {
  const auto c = config::parse_config(kSolve);
  try {
    config::require_for_task(c, "compare");
    FAIL("compare without n_paths must fail");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("n_paths required for compare") != std::string::npos);
  }
  CHECK_NOTHROW(config::require_for_task(config::parse_config(kCompare), "compare"));
  CHECK_NOTHROW(config::require_for_task(
      config::parse_config(R"({"model": "example3", "driver": [{"b": 0}, {"b": 0}]})"), "flow-check"));
}

TEST_CASE("model families") {
  const auto c = config::parse_config(R"({
    "model": {"d": 2, "n": 1,
              "drift": {"family": "cubic", "matrix": [[0, 1], [-1, 0]], "cubic": [-1, 0]},
              "sigma": {"family": "linear", "matrices": [[[1, 0], [0, 1]]], "offset": [[0], [1]]}},
    "driver": {"b": 0.5, "a": 1}
  })");
  const Vec x = (Vec(2) << 2.0, -1.0).finished();
  const Vec f = c.model.drift(x);
  CHECK(f[0] == doctest::Approx(-1.0 - 8.0));
  CHECK(f[1] == doctest::Approx(-2.0));
  const Mat s = c.model.noise.sigma(x);
  CHECK(s(0, 0) == 2.0);
  CHECK(s(1, 0) == 0.0);  // -1 + 1
  CHECK(c.model.driver.b()[0] == 0.5);
}

TEST_CASE("unknown model exits 2 and still writes a manifest") {
  const fs::path out = scratch("unknown");
  const int code = run::run_task("solve", R"({"model": "example9", "driver": {}})", out, std::nullopt);
  CHECK(code == run::kConfigError);
  const std::string manifest = slurp(out / "manifest.txt");
  CHECK(manifest.find("unknown model") != std::string::npos);
  CHECK(manifest.find("exit_code = 2") != std::string::npos);
}

TEST_CASE("solve with T = 0 reproduces the initial density") {
  std::string text = kSolve;
  text.insert(text.rfind('}'), R"(, "T": 0)");
  const fs::path out = scratch("t0");
  REQUIRE(run::run_task("solve", text, out, std::nullopt) == run::kOk);
  std::ifstream in(out / "density_000.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "x1,p");
  const auto grid = fpe::Grid({fpe::Axis{-4.0, 4.0, 64}});
  const auto p0 = fpe::initial_density(NormalInitial{Vec::Constant(1, 1.0), Vec::Constant(1, 0.25)}, grid);
  std::size_t k = 0;
  double worst = 0.0;
  while (std::getline(in, line)) {
    const double p = std::stod(line.substr(line.find(',') + 1));
    worst = std::max(worst, std::abs(p - p0.values[k++]));
  }
  CHECK(k == 64);
  CHECK(worst <= 1e-11);  // 12 significant digits in the csv
}

TEST_CASE("compare writes a report and is reproducible") {
  const fs::path a = scratch("cmp_a");
  const fs::path b = scratch("cmp_b");
  REQUIRE(run::run_task("compare", kCompare, a, std::nullopt) == run::kOk);
  REQUIRE(run::run_task("compare", kCompare, b, std::nullopt) == run::kOk);
  const std::string report = slurp(a / "report.txt");
  CHECK(report.find("l1_distance = ") != std::string::npos);
  for (const char* f : {"report.txt", "ensemble.csv", "histogram.csv", "density_000.csv", "moments.txt", "solve.txt"})
    CHECK(slurp(a / f) == slurp(b / f));
  CHECK(slurp(a / "manifest.txt").find("status = ok") != std::string::npos);

  const fs::path c = scratch("cmp_c");
  REQUIRE(run::run_task("compare", kCompare, c, 6) == run::kOk);
  CHECK(slurp(a / "ensemble.csv") != slurp(c / "ensemble.csv"));
}

TEST_CASE("command line") {
  const fs::path out = scratch("cli");
  CHECK(cli({"solve", "--config", (out / "missing.json").string(), "--output", out.string()}) == run::kConfigError);
  CHECK(fs::exists(out / "manifest.txt"));
  CHECK(cli({"bogus", "--config", "x.json"}) == run::kConfigError);

  fs::create_directories(out);
  {
    std::ofstream cfg(out / "fc.json");
    cfg << R"({"model": "example2", "driver": [{"b": 0}, {"b": 0}], "flow_check": {"samples": 20}})";
  }
  CHECK(cli({"flow-check", "--config", (out / "fc.json").string(), "--output", (out / "fc").string()}) == run::kOk);
  CHECK(slurp(out / "fc" / "flow_check.txt").find("max_residual") != std::string::npos);
}
