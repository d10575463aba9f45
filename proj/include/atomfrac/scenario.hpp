#pragma once

#include "atomfrac/evolution.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace atomfrac {

/// Raised for malformed scenario files; the message names the offending key.
class ParseError : public ConfigurationError {
 public:
  using ConfigurationError::ConfigurationError;
};

struct LatticeSpec {
  std::string type = "chain";  // chain | triangular
  int count = 13;              // chain
  int rows = 10;               // triangular
  int cols = 15;
  double spacing = 1.0;
  bool nnn = false;
  std::string dirichlet = "both_ends";  // both_ends | left_end | left_right_columns
  bool operator==(const LatticeSpec&) const = default;
};

struct PotentialSpec {
  std::string kind = "lennard_jones";
  double eta = 0.25;  // next-nearest strength
  bool operator==(const PotentialSpec&) const = default;
};

/// Thresholds as multiples of each bond's rest length.
struct DamageSpec {
  double r1 = 1.2;
  double r2 = 1.2;
  double delta = 1e-6;
  std::string shape = "piecewise_linear";
  bool operator==(const DamageSpec&) const = default;
};

struct ScheduleSpec {
  std::string kind = "sinusoidal_stretch";  // sinusoidal_stretch | linear_ramp | hold
  double amplitude = 1.0;
  double angular_frequency = 1.0;
  double angle = 0.0;  // radians from the x axis
  bool operator==(const ScheduleSpec&) const = default;
};

struct DynamicsSpec {
  double tau = 1.0 / 60.0;
  double final_time = 1.0;
  double viscosity = 0.1;
  std::string dissipation = "l2";  // l2 | kelvin_voigt
  bool operator==(const DynamicsSpec&) const = default;
};

struct SolverSpec {
  double grad_tol = 0.0;
  int max_iters = 10000;
  double ls_shrink = 0.5;
  double ls_c1 = 1e-4;
  std::string orientation_guard = "off";  // off | barrier
  double barrier_weight = 0.0;
  double tie_tol = 1e-10;
  bool operator==(const SolverSpec&) const = default;
};

struct ThreeBodySpec {
  bool enabled = false;
  double stiffness = 0.0;
  std::optional<double> rest_angle;
  bool operator==(const ThreeBodySpec&) const = default;
};

struct InitialSpec {
  std::optional<std::uint64_t> seed;  // perturb free atoms when set
  double perturbation = 0.0;          // max displacement, in units of the spacing
  bool operator==(const InitialSpec&) const = default;
};

struct OutputSpec {
  std::string dir = "out";
  bool stress_strain = true;
  bool operator==(const OutputSpec&) const = default;
};

struct Scenario {
  std::string name = "scenario";
  LatticeSpec lattice;
  PotentialSpec potential;
  DamageSpec damage;
  ScheduleSpec schedule;
  DynamicsSpec dynamics;
  SolverSpec solver;
  ThreeBodySpec three_body;
  InitialSpec initial;
  OutputSpec output;
  bool operator==(const Scenario&) const = default;
};

/// Parses the YAML scenario format. Unknown keys are rejected; a non-integral T / tau is
/// rounded to the nearest step count with a message appended to `warnings`.
Scenario parse_scenario_text(const std::string& text, std::vector<std::string>* warnings = nullptr);
Scenario parse_scenario(const std::string& path, std::vector<std::string>* warnings = nullptr);

/// Emits every field; parse_scenario_text(write_scenario(s)) == s.
std::string write_scenario(const Scenario& s);

/// Throws ParseError naming the key of the first violated constraint.
void validate(const Scenario& s);

EvolutionSetup build_setup(const Scenario& s);

std::vector<std::string> preset_names();
Scenario preset(const std::string& name);

}  // namespace atomfrac
