#include "atomfrac/analysis.hpp"
#include "atomfrac/evolution.hpp"
#include "atomfrac/scenario.hpp"
#include "atomfrac/trace_io.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace atomfrac;

namespace {

double parse_fraction(const std::string& text) {
  const auto slash = text.find('/');
  std::size_t used = 0;
  if (slash == std::string::npos) {
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  }
  const double num = std::stod(text.substr(0, slash), &used);
  if (used != slash) throw std::invalid_argument(text);
  const std::string den_text = text.substr(slash + 1);
  const double den = std::stod(den_text, &used);
  if (used != den_text.size() || den == 0.0) throw std::invalid_argument(text);
  return num / den;
}

Scenario load(const std::string& path) {
  std::vector<std::string> warnings;
  Scenario s = parse_scenario(path, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  return s;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  body(out);
}

int cmd_run(const std::string& file, const std::string& out_override, bool verbose) {
  const Scenario scenario = load(file);
  EvolutionSetup setup = build_setup(scenario);
  if (verbose) {
    setup.on_step = [](const StepRecord& r) {
      std::cerr << "step " << r.step << " iters " << r.iterations << " residual " << r.residual_norm << " broken "
                << r.broken_bonds.size() << " ties " << r.tie_bonds.size() << '\n';
    };
  }
  const fs::path dir = out_override.empty() ? fs::path(scenario.output.dir) : fs::path(out_override);
  fs::create_directories(dir);

  RunSummary summary;
  summary.scenario = scenario.name;
  EvolutionTrace trace;
  try {
    trace = run_evolution(setup);
  } catch (const EvolutionFailure& e) {
    trace = e.partial();
    summary.truncated = true;
    summary.failure = trace.failure;
    std::cerr << "error: " << e.what() << '\n';
  }

  const LatticeSystem& sys = setup.sys;
  write_file(dir / "trajectory.csv", [&](std::ostream& o) { write_trajectory_csv(o, trace, sys); });
  write_file(dir / "bonds.csv", [&](std::ostream& o) { write_bonds_csv(o, trace, sys, setup.inter, setup.settings.tie_tol); });

  summary.report = verify_trace(trace, sys, setup.inter, setup.dissipation, setup.tau, setup.settings, &setup.schedule);
  if (sys.ambient_dim == 2) {
    summary.has_crack = true;
    summary.crack = classify_crack(trace, sys);
  }
  if (scenario.output.stress_strain && setup.schedule.kind != ScheduleKind::hold && !setup.schedule.moving_set.empty()) {
    const StressStrainCurve curve = stress_strain(trace, sys, setup.inter, setup.schedule, setup.settings.tie_tol);
    write_file(dir / "stress_strain.csv", [&](std::ostream& o) { write_stress_strain_csv(o, curve); });
    summary.has_stress = true;
    for (const auto& s : curve.samples) summary.peak_stress = std::max(summary.peak_stress, s.stress);
  }
  write_file(dir / "verify.json", [&](std::ostream& o) { write_verify_json(o, summary); });

  const int steps = static_cast<int>(trace.steps.size()) - 1;
  std::cout << scenario.name << ": " << steps << " steps, " << trace.steps.back().broken_bonds.size()
            << " broken bonds";
  if (summary.has_crack) std::cout << ", crack " << to_string(summary.crack.kind);
  std::cout << ", verification " << (summary.report.passed() ? "passed" : "FAILED") << " -> " << dir.string() << '\n';
  if (summary.truncated) return 2;
  return summary.report.passed() ? 0 : 1;
}

int cmd_tau_study(const std::string& file, const std::string& taus_text, const std::string& out_override) {
  const Scenario scenario = load(file);
  std::vector<double> taus;
  std::stringstream in(taus_text);
  for (std::string item; std::getline(in, item, ',');) {
    try {
      taus.push_back(parse_fraction(item));
    } catch (const std::exception&) {
      throw ConfigurationError("bad tau value '" + item + "'");
    }
  }
  const EvolutionSetup setup = build_setup(scenario);
  const TauStudyReport report = refine_tau_study(setup, taus);
  const fs::path dir = out_override.empty() ? fs::path(scenario.output.dir) : fs::path(out_override);
  fs::create_directories(dir);
  write_file(dir / "tau_study.csv", [&](std::ostream& o) { write_tau_study_csv(o, report); });
  write_tau_study_csv(std::cout, report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quasi-static crack evolution in damageable atomistic lattices"};
  app.require_subcommand(1);

  std::string scenario_file;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "run a scenario and write trajectory, bonds, verification and stress files");
  run->add_option("scenario", scenario_file, "scenario YAML file")->required();
  run->add_option("--out", out_dir, "output directory (default: output.dir of the scenario)");
  bool verbose = false;
  run->add_flag("-v,--verbose", verbose, "per-step solver statistics on stderr");

  std::string taus;
  auto* study = app.add_subcommand("tau-study", "rerun a scenario for decreasing time steps");
  study->add_option("scenario", scenario_file, "scenario YAML file")->required();
  study->add_option("--taus", taus, "comma-separated time steps, e.g. 1/30,1/60,1/120")->required();
  study->add_option("--out", out_dir, "output directory for tau_study.csv");

  std::string action;
  std::string preset_name;
  auto* presets = app.add_subcommand("presets", "list or print the shipped scenarios");
  presets->add_option("action", action, "list | emit")->required()->check(CLI::IsMember({"list", "emit"}));
  presets->add_option("name", preset_name, "preset to emit");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(scenario_file, out_dir, verbose);
    if (*study) return cmd_tau_study(scenario_file, taus, out_dir);
    if (*presets) {
      if (action == "list") {
        for (const auto& name : preset_names()) std::cout << name << '\n';
        return 0;
      }
      if (preset_name.empty()) throw ConfigurationError("presets emit needs a preset name");
      std::cout << write_scenario(preset(preset_name));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
