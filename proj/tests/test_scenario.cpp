#include "atomfrac/scenario.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <string>

using namespace atomfrac;

namespace {

const char* minimal = R"(
name: tiny
lattice: {type: chain, count: 5}
dynamics: {tau: 1/10, final_time: 1}
)";

std::string parse_error(const std::string& text) {
  try {
    parse_scenario_text(text);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("every preset round-trips through the text format") {
  const auto names = preset_names();
  CHECK(names.size() == 7);
  for (const auto& name : names) {
    CAPTURE(name);
    const Scenario s = preset(name);
    CHECK(s.name == name);
    const std::string text = write_scenario(s);
    CHECK(parse_scenario_text(text) == s);
    CHECK_NOTHROW(build_setup(s));
  }
  CHECK_THROWS_AS(preset("nope"), ConfigurationError);
}

TEST_CASE("preset contents") {
  const Scenario one = preset("paper-1d-l2");
  CHECK(one.lattice.type == "chain");
  CHECK(one.lattice.count == 13);
  CHECK(one.damage.r1 == 1.2);
  CHECK(one.damage.r2 == 1.2);
  CHECK(one.dynamics.tau == doctest::Approx(1.0 / 60.0));
  CHECK(one.dynamics.viscosity == 0.1);
  CHECK(one.dynamics.dissipation == "l2");
  CHECK(preset("paper-1d-kv").dynamics.dissipation == "kelvin_voigt");

  const Scenario diag = preset("paper-2d-diag-nu0.01");
  CHECK(diag.lattice.type == "triangular");
  CHECK(diag.lattice.nnn);
  CHECK(diag.potential.eta == 0.25);
  CHECK(diag.dynamics.viscosity == 0.01);
  CHECK(diag.schedule.angle == doctest::Approx(std::numbers::pi / 8));
  CHECK(diag.lattice.rows * diag.lattice.cols <= 150);

  const Scenario nu1 = preset("paper-2d-horizontal-nu1");
  CHECK(nu1.dynamics.viscosity == 1.0);
  CHECK(nu1.dynamics.dissipation == "kelvin_voigt");
  CHECK(nu1.schedule.angle == 0.0);

  Scenario a = preset("paper-stress-strain-R1.2");
  Scenario b = preset("paper-stress-strain-R1.07");
  CHECK(a.damage.r1 == 1.2);
  CHECK(b.damage.r1 == 1.07);
  // otherwise identical
  b.damage = a.damage;
  b.name = a.name;
  b.output = a.output;
  CHECK(a == b);
}

TEST_CASE("minimal file with defaults and fractions") {
  const Scenario s = parse_scenario_text(minimal);
  CHECK(s.name == "tiny");
  CHECK(s.lattice.count == 5);
  CHECK(s.lattice.dirichlet == "both_ends");
  CHECK(s.dynamics.tau == doctest::Approx(0.1).epsilon(1e-15));
  const EvolutionSetup setup = build_setup(s);
  CHECK(setup.sys.atom_count() == 5);
  CHECK(setup.y0 == setup.sys.positions);

  const Scenario tri = parse_scenario_text("lattice: {type: triangular, rows: 3, cols: 4}\ndynamics: {final_time: 1}\n");
  CHECK(tri.lattice.dirichlet == "left_right_columns");
  CHECK(parse_scenario_text("lattice: {type: chain}\ndynamics: {final_time: 1}\ndamage: {r1: 1.3}\n").damage.r2 == 1.3);
}

TEST_CASE("unknown and malformed keys are named") {
  CHECK(parse_error(std::string(minimal) + "solver: {gradtol: 1}\n").find("solver.gradtol") != std::string::npos);
  CHECK(parse_error(std::string(minimal) + "colour: red\n").find("colour") != std::string::npos);
  CHECK(parse_error("lattice: {type: chain, count: many}\ndynamics: {final_time: 1}\n").find("lattice.count") !=
        std::string::npos);
  CHECK(parse_error("lattice: {type: chain}\ndynamics: {tau: 1/0, final_time: 1}\n").find("dynamics.tau") !=
        std::string::npos);
  CHECK(parse_error("dynamics: {final_time: 1}\n").find("lattice") != std::string::npos);
  CHECK(parse_error("lattice: {count: 3}\ndynamics: {final_time: 1}\n").find("lattice.type") != std::string::npos);
  CHECK(parse_error("lattice: [1, 2\n") != "");
  CHECK(parse_error("") != "");
  CHECK_THROWS_AS(parse_scenario("/nonexistent/scenario.yaml"), ParseError);
}

TEST_CASE("validation names the violated key") {
  auto bad = [](auto edit) {
    Scenario s = parse_scenario_text(minimal);
    edit(s);
    try {
      validate(s);
    } catch (const ParseError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(bad([](Scenario& s) { s.damage.r2 = 1.1; }).rfind("damage.r2", 0) == 0);
  CHECK(bad([](Scenario& s) { s.damage.r1 = 0.9; }).rfind("damage.r1", 0) == 0);
  CHECK(bad([](Scenario& s) { s.damage.delta = 0.0; }).rfind("damage.delta", 0) == 0);
  CHECK(bad([](Scenario& s) { s.lattice.count = 1; }).rfind("lattice.count", 0) == 0);
  CHECK(bad([](Scenario& s) { s.lattice.nnn = true; }).rfind("lattice.nnn", 0) == 0);
  CHECK(bad([](Scenario& s) { s.dynamics.viscosity = 0.0; }).rfind("dynamics.viscosity", 0) == 0);
  CHECK(bad([](Scenario& s) { s.dynamics.dissipation = "l1"; }).rfind("dynamics.dissipation", 0) == 0);
  CHECK(bad([](Scenario& s) { s.schedule.kind = "jump"; }).rfind("schedule.kind", 0) == 0);
  CHECK(bad([](Scenario& s) { s.schedule.angle = 1.0; }).rfind("schedule.angle", 0) == 0);
  CHECK(bad([](Scenario& s) { s.solver.ls_shrink = 1.0; }).rfind("solver.ls_shrink", 0) == 0);
  CHECK(bad([](Scenario& s) { s.solver.orientation_guard = "barrier"; }).rfind("solver.barrier_weight", 0) == 0);
  CHECK(bad([](Scenario& s) { s.three_body.enabled = true; }).rfind("three_body.enabled", 0) == 0);
  CHECK(bad([](Scenario& s) { s.initial.perturbation = 0.7; }).rfind("initial.perturbation", 0) == 0);
  CHECK(bad([](Scenario&) {}).empty());
  CHECK(parse_error("lattice: {type: chain}\ndynamics: {final_time: 1}\ndamage: {r1: 1.2, r2: 1.1}\n")
            .find("damage.r2") != std::string::npos);
}

TEST_CASE("non-integral step counts are rounded with a warning") {
  std::vector<std::string> warnings;
  const Scenario s =
      parse_scenario_text("lattice: {type: chain}\ndynamics: {tau: 0.3, final_time: 1}\n", &warnings);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("dynamics.final_time") != std::string::npos);
  CHECK(s.dynamics.final_time == doctest::Approx(0.9));
  warnings.clear();
  parse_scenario_text(minimal, &warnings);
  CHECK(warnings.empty());
}

TEST_CASE("perturbed initial data is reproducible and keeps the boundary") {
  Scenario s = parse_scenario_text(minimal);
  s.initial.seed = 9;
  s.initial.perturbation = 1e-3;
  const EvolutionSetup a = build_setup(s);
  const EvolutionSetup b = build_setup(s);
  CHECK(a.y0 == b.y0);
  CHECK(a.y0 != a.sys.positions);
  CHECK((a.y0 - a.sys.positions).lpNorm<Eigen::Infinity>() <= 1e-3);
  for (AtomId i : a.sys.dirichlet) CHECK(a.y0[i] == a.sys.positions[i]);
}
