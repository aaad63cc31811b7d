#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "mfbo/subprocess.hpp"

using mfbo::BoxDomain;
using mfbo::CostFunction;
using mfbo::EvaluationError;
using mfbo::Observation;
using mfbo::SubprocessObjective;

namespace {

std::string write_child_script(const std::string& name, const std::string& body) {
  const auto dir = std::filesystem::temp_directory_path() / "mfbo_subprocess_tests";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / name).string();
  std::ofstream out(path);
  out << body;
  return path;
}

const char* kEchoChild = R"PY(
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    print(json.dumps({"y": sum(req["x"]) + req["z"]}), flush=True)
)PY";

const char* kCostChild = R"PY(
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    print(json.dumps({"y": 1.23, "cost": 4.0}), flush=True)
)PY";

const char* kOneShotChild = R"PY(
import json, sys
line = sys.stdin.readline()
print(json.dumps({"y": 0.5}), flush=True)
)PY";

const char* kGarbageChild = R"PY(
import sys
for line in sys.stdin:
    print("not json", flush=True)
)PY";

const char* kSleepyChild = R"PY(
import sys, time
for line in sys.stdin:
    time.sleep(5)
    print("{\"y\": 1}", flush=True)
)PY";

}  // namespace

TEST_CASE("subprocess round trip") {
  const std::string script = write_child_script("echo.py", kEchoChild);
  SubprocessObjective obj("python3 " + script, BoxDomain::unit_cube(2), CostFunction::poly(0.1, 1.0, 2.0),
                          0.0, 10.0);
  mfbo::Rng rng(1);
  const Observation obs = obj.evaluate(std::vector<double>{0.2, 0.7}, 0.5, rng);
  CHECK_THAT(obs.y, Catch::Matchers::WithinAbs(0.2 + 0.7 + 0.5, 1e-12));
  CHECK_THAT(obs.cost, Catch::Matchers::WithinAbs(0.1 + 0.25, 1e-12));  // model cost
  CHECK_FALSE(obj.mean(std::vector<double>{0.2, 0.7}, 0.5).has_value());

  // requests are answered in order
  const Observation second = obj.evaluate(std::vector<double>{0.0, 0.0}, 1.0, rng);
  CHECK_THAT(second.y, Catch::Matchers::WithinAbs(1.0, 1e-12));
  CHECK(second.seq == 2);
}

TEST_CASE("response cost overrides the model") {
  const std::string script = write_child_script("cost.py", kCostChild);
  SubprocessObjective obj("python3 " + script, BoxDomain::unit_cube(1), CostFunction::unit(), 0.0, 10.0);
  mfbo::Rng rng(1);
  const Observation obs = obj.evaluate(std::vector<double>{0.5}, 0.5, rng);
  CHECK(obs.y == 1.23);
  CHECK(obs.cost == 4.0);
}

TEST_CASE("child exit surfaces as an evaluation error") {
  const std::string script = write_child_script("oneshot.py", kOneShotChild);
  SubprocessObjective obj("python3 " + script, BoxDomain::unit_cube(1), CostFunction::unit(), 0.0, 10.0);
  mfbo::Rng rng(1);
  CHECK(obj.evaluate(std::vector<double>{0.5}, 1.0, rng).y == 0.5);
  CHECK_THROWS_AS(obj.evaluate(std::vector<double>{0.5}, 1.0, rng), EvaluationError);
}

TEST_CASE("malformed responses surface as evaluation errors") {
  const std::string script = write_child_script("garbage.py", kGarbageChild);
  SubprocessObjective obj("python3 " + script, BoxDomain::unit_cube(1), CostFunction::unit(), 0.0, 10.0);
  mfbo::Rng rng(1);
  CHECK_THROWS_AS(obj.evaluate(std::vector<double>{0.5}, 1.0, rng), EvaluationError);
}

TEST_CASE("slow children hit the configured timeout") {
  const std::string script = write_child_script("sleepy.py", kSleepyChild);
  SubprocessObjective obj("python3 " + script + " 2>/dev/null", BoxDomain::unit_cube(1),
                          CostFunction::unit(), 0.0, 0.2);
  mfbo::Rng rng(1);
  CHECK_THROWS_AS(obj.evaluate(std::vector<double>{0.5}, 1.0, rng), EvaluationError);
}

TEST_CASE("subprocess rejects out-of-domain points before any writes") {
  const std::string script = write_child_script("echo2.py", kEchoChild);
  SubprocessObjective obj("python3 " + script, BoxDomain::unit_cube(1), CostFunction::unit(), 0.0, 10.0);
  mfbo::Rng rng(1);
  CHECK_THROWS_AS(obj.evaluate(std::vector<double>{2.0}, 1.0, rng), std::domain_error);
}
