#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "robust/error.hpp"
#include "robust/runner.hpp"
#include "robust/verify.hpp"

using namespace robust;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("robust_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return (path / name).string();
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config_error(const std::string& json) {
  try {
    parse_config(json);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::config);
    return e.what();
  }
  return "";
}

const char* kTwoPoint = R"({
  "model": {"n_steps": 1, "terminal": {"kind": "array", "values": [0, 1]}},
  "cost": {"alpha": 0, "alpha_bar": 1, "beta": 1},
  "penalty": {"family": "fdiv", "name": "entropy"}
})";

}  // namespace

TEST_CASE("config parsing") {
  auto c = parse_config(kTwoPoint);
  CHECK(c.model.n_steps == 1);
  CHECK(c.cost.fdiv());
  CHECK(c.run.method == "convex");
  CHECK(c.run.n_list == std::vector<int>{25, 50, 100, 200});

  auto h = parse_config(R"({"model": {"n_steps": 4, "terminal": {"kind": "affine", "a": 0, "b": 1}},
    "cost": {"alpha": 0, "alpha_bar": 1, "beta": 2},
    "penalty": {"family": "consistent", "name": "quartic"},
    "run": {"scheme": "euler", "steps": 50, "driver_beta_scaling": false}})");
  CHECK_FALSE(h.cost.fdiv());
  CHECK(h.run.scheme == Scheme::euler);
  CHECK(*h.run.steps == 50);
  CHECK_FALSE(h.run.bsde.driver_beta_scaling);
}

TEST_CASE("config errors name the field") {
  CHECK(config_error("{").find("config") != std::string::npos);
  CHECK(config_error(R"({"model": {}, "cost": {}})").find("penalty") != std::string::npos);
  CHECK(config_error(R"({"penalty": {"family": "fdiv", "name": "entropy"}, "model": {"n_steps": 0}})")
            .find("model.n_steps") != std::string::npos);
  CHECK(config_error(R"({"penalty": {"family": "fdiv", "name": "entropy"}, "cost": {"beta": -1}})")
            .find("cost.beta") != std::string::npos);
  CHECK(config_error(R"({"penalty": {"family": "fdiv", "name": "entropy"}, "model": {"colour": 1}})")
            .find("model.colour") != std::string::npos);
  CHECK(config_error(R"({"penalty": {"family": "fdiv", "name": "power"}})").find("penalty.power") !=
        std::string::npos);
  CHECK(config_error(R"({"penalty": {"family": "fdiv", "name": "entropy", "kappa1": 1}})")
            .find("penalty.kappa1") != std::string::npos);
  CHECK(config_error(R"({"penalty": {"family": "fdiv", "name": "entropy"}, "run": {"suite": "nope"}})")
            .find("run.suite") != std::string::npos);
  CHECK(config_error(
            R"({"penalty": {"family": "fdiv", "name": "entropy"}, "model": {"discount": {"kind": "affine", "a": 0, "b": 1}}})")
            .find("model.discount") != std::string::npos);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), Error);
}

TEST_CASE("run overrides") {
  auto c = parse_config(kTwoPoint);
  apply_run_overrides(c, R"({"method": "brute", "grid_step": 0.001})");
  CHECK(c.run.method == "brute");
  CHECK(c.run.grid_step == 0.001);
  CHECK_THROWS_AS(apply_run_overrides(c, R"({"grid_step": -1})"), Error);
  CHECK_THROWS_AS(apply_run_overrides(c, R"({"bogus": 1})"), Error);
}

TEST_CASE("verify suites") {
  CHECK_THROWS_AS(verify_suite("nope", {}), Error);
  VerifyOptions o;
  o.young_samples = 200;
  auto r = verify_suite("young", o);
  CHECK(r.failed() == 0);
  CHECK(r.passed() == r.rows.size());
  std::ostringstream out;
  write_verification_csv(out, r);
  CHECK(out.str().rfind("check,instance,lhs,rhs,slack,pass\r\n", 0) == 0);
}

TEST_CASE("run writes outputs and exit codes") {
  TempDir dir("run");
  auto cfg = dir.write("two_point.json", kTwoPoint);

  auto ev = run("evaluate", cfg, dir.path.string());
  REQUIRE(ev.exit_code == 0);
  auto text = slurp(dir.path / "evaluate.csv");
  CHECK(text.rfind("gamma,utility_leg,penalty_leg,divergence,c_upper,k_lower,bound_upper_ok,bound_lower_ok\r\n", 0) == 0);
  // at Q = P the cost is E_P[U^delta] = 0.5
  CHECK(std::stod(text.substr(text.find('\n') + 1)) == doctest::Approx(0.5));
  CHECK(fs::exists(dir.path / "evaluate.config.json"));

  auto op = run("optimize", cfg, dir.path.string(), R"({"tol": 1e-12})");
  REQUIRE(op.exit_code == 0);
  CHECK(fs::exists(dir.path / "optimize.csv"));
  CHECK(fs::exists(dir.path / "optimize.overrides.json"));

  CHECK(run("nope", cfg, dir.path.string()).exit_code == 1);
  CHECK(run("evaluate", (dir.path / "missing.json").string(), dir.path.string()).exit_code == 1);
  auto bad = dir.write("bad.json", "{\"model\": ");
  CHECK(run("evaluate", bad, dir.path.string()).exit_code == 1);
  // fdiv penalty cannot drive the bsde
  CHECK(run("bsde", cfg, dir.path.string()).exit_code == 1);

  auto young = run("verify", cfg, dir.path.string(), R"({"suite": "young", "young_samples": 100})");
  CHECK(young.exit_code == 0);
  CHECK(fs::exists(dir.path / "verify.csv"));
}

TEST_CASE("bsde output") {
  TempDir dir("bsde");
  auto cfg = dir.write("walk.json", R"({
    "model": {"n_steps": 10, "terminal": {"kind": "affine", "a": 0, "b": 1}},
    "cost": {"alpha": 0, "alpha_bar": 1, "beta": 1},
    "penalty": {"family": "consistent", "name": "quadratic"},
    "run": {"scheme": "closed"}})");
  auto r = run("bsde", cfg, dir.path.string());
  REQUIRE(r.exit_code == 0);
  auto text = slurp(dir.path / "bsde.csv");
  CHECK(text.rfind("level,index,walk,y,z,eta\r\n", 0) == 0);
  std::size_t lines = 0;
  for (char ch : text) lines += ch == '\n';
  CHECK(lines == 1 + 66);  // sum_{k=0}^{10} (k + 1)
  CHECK(run("bsde", cfg, dir.path.string(), R"({"steps": 100000})").exit_code == 1);
  CHECK(run("bsde", cfg, dir.path.string(), R"({"scheme": "closed", "steps": 5})").exit_code == 0);
}
