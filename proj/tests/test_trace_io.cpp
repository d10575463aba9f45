#include "atomfrac/scenario.hpp"
#include "atomfrac/trace_io.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <limits>
#include <random>
#include <sstream>
#include <string>

using namespace atomfrac;

namespace {

std::vector<std::string> data_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line[0] != '#') out.push_back(line);
  }
  return out;
}

EvolutionSetup hold_setup() {
  Scenario s = parse_scenario_text("lattice: {type: chain, count: 4}\ndynamics: {tau: 0.1, final_time: 1}\n"
                                   "schedule: {kind: hold}\n");
  return build_setup(s);
}

}  // namespace

TEST_CASE("format_double round-trips") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
  }
  CHECK(std::stod(format_double(0.1)) == 0.1);
  CHECK(format_double(1.0 / 3.0) == "0.33333333333333331");
  CHECK(std::strtod(format_double(std::numeric_limits<double>::denorm_min()).c_str(), nullptr) ==
        std::numeric_limits<double>::denorm_min());
}

TEST_CASE("trajectory and bond tables") {
  const EvolutionSetup setup = hold_setup();
  const EvolutionTrace trace = run_evolution(setup);
  std::ostringstream traj;
  write_trajectory_csv(traj, trace, setup.sys);
  const auto rows = data_lines(traj.str());
  CHECK(rows.front() == "step,time,atom_id,x");
  CHECK(rows.size() == 1 + 11 * 4);
  CHECK(traj.str().rfind("# dirichlet: 0 3\n# driven: 3\n", 0) == 0);

  std::ostringstream bonds;
  write_bonds_csv(bonds, trace, setup.sys, setup.inter);
  const auto bond_rows = data_lines(bonds.str());
  CHECK(bond_rows.front() == "step,bond_id,a,b,kind,rest_length,separation,memory,phi,branch");
  CHECK(bond_rows.size() == 1 + 11 * 3);

  const LatticeSystem patch = build_triangular(3, 3, 1.0, false);
  EvolutionTrace flat;
  flat.tau = 1.0;
  StepRecord r;
  r.y = patch.positions;
  r.memory = DamageState::initial(patch, patch.positions).memory;
  flat.steps.push_back(r);
  std::ostringstream planar;
  write_trajectory_csv(planar, flat, patch);
  CHECK(data_lines(planar.str()).front() == "step,time,atom_id,x,y");
}

TEST_CASE("stress and tau tables") {
  StressStrainCurve curve;
  curve.boundary_bonds = 3;
  curve.samples.push_back({0, 0.0, 0.0, 0.0});
  curve.samples.push_back({1, 0.1, 0.01, 0.123456789012345678});
  std::ostringstream out;
  write_stress_strain_csv(out, curve);
  const auto rows = data_lines(out.str());
  CHECK(rows[0] == "step,time,strain,stress");
  CHECK(rows[2] == "1,0.10000000000000001,0.01,0.12345678901234568");

  TauStudyReport report;
  report.rows.resize(3);
  std::ostringstream tau;
  write_tau_study_csv(tau, report);
  CHECK(data_lines(tau.str()).size() == 4);
  CHECK(data_lines(tau.str())[0].rfind("tau,steps,sup_distance_to_next", 0) == 0);
}

TEST_CASE("verification json parses") {
  RunSummary summary;
  summary.scenario = "quote\"d";
  summary.report.lift_identity_max_error = 1e-13 / 3.0;
  summary.report.per_step_inequality_min_slack = std::numeric_limits<double>::infinity();
  summary.has_crack = true;
  summary.crack.kind = CrackKind::kinked;
  std::ostringstream out;
  write_verify_json(out, summary);
  const auto j = nlohmann::json::parse(out.str());
  CHECK(j["scenario"] == "quote\"d");
  CHECK(j["passed"] == true);
  CHECK(j["lift_identity_max_error"].get<double>() == 1e-13 / 3.0);
  CHECK(j["per_step_inequality_min_slack"].is_null());
  CHECK(j["crack"]["kind"] == "kinked");
  CHECK_FALSE(j.contains("peak_stress"));
}
