#include "atomfrac/trace_io.hpp"

#include <cmath>
#include <cstdio>
#include <utility>
#include <vector>

namespace atomfrac {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

void dirichlet_header(std::ostream& out, const LatticeSystem& sys) {
  out << "# dirichlet:";
  for (AtomId i : sys.dirichlet) out << ' ' << i;
  out << "\n# driven:";
  for (AtomId i : sys.right_layer) out << ' ' << i;
  out << '\n';
}

const char* branch_name(Branch b) {
  switch (b) {
    case Branch::full: return "full";
    case Branch::soft: return "soft";
    case Branch::tie: return "tie";
  }
  return "full";
}

}  // namespace

void write_trajectory_csv(std::ostream& out, const EvolutionTrace& trace, const LatticeSystem& sys) {
  const int n = sys.ambient_dim;
  dirichlet_header(out, sys);
  if (trace.truncated) out << "# truncated: " << trace.failure << '\n';
  out << "step,time,atom_id,x";
  if (n == 2) out << ",y";
  out << '\n';
  for (const StepRecord& s : trace.steps) {
    const std::string t = format_double(s.time);
    for (AtomId i = 0; i < sys.atom_count(); ++i) {
      out << s.step << ',' << t << ',' << i;
      for (int c = 0; c < n; ++c) out << ',' << format_double(s.y[i * n + c]);
      out << '\n';
    }
  }
}

void write_bonds_csv(std::ostream& out, const EvolutionTrace& trace, const LatticeSystem& sys,
                     const Interactions& inter, double tie_tol) {
  dirichlet_header(out, sys);
  if (trace.truncated) out << "# truncated: " << trace.failure << '\n';
  out << "step,bond_id,a,b,kind,rest_length,separation,memory,phi,branch\n";
  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    const StepRecord& s = trace.steps[k];
    const Vector& frozen = trace.steps[k == 0 ? 0 : k - 1].memory;
    for (std::size_t b = 0; b < sys.bonds.size(); ++b) {
      const Bond& bond = sys.bonds[b];
      const PairPotential& p = inter.pair(bond.kind);
      const double r = bond_separation(sys, bond, s.y);
      const double m = s.memory[b];
      const Branch branch = classify_branch(pair_value(p, r), pair_value(p, frozen[b]), tie_tol);
      out << s.step << ',' << b << ',' << bond.a << ',' << bond.b << ','
          << (bond.kind == BondKind::nearest ? "nearest" : "next_nearest") << ',' << format_double(bond.rest_length)
          << ',' << format_double(r) << ',' << format_double(m) << ','
          << format_double(evaluate_phi(inter.transition(bond.kind), m)) << ',' << branch_name(branch) << '\n';
    }
  }
}

void write_stress_strain_csv(std::ostream& out, const StressStrainCurve& curve) {
  out << "# stress: |sum of forces on the driven layer| / " << curve.boundary_bonds << " boundary bonds\n";
  out << "step,time,strain,stress\n";
  for (const auto& s : curve.samples) {
    out << s.step << ',' << format_double(s.time) << ',' << format_double(s.strain) << ','
        << format_double(s.stress) << '\n';
  }
}

void write_tau_study_csv(std::ostream& out, const TauStudyReport& report) {
  out << "# distances_decreasing: " << (report.distances_decreasing ? "true" : "false") << '\n';
  out << "tau,steps,sup_distance_to_next,dissipation_sum,g_increment_sum,g_increment_penalty,lipschitz_estimate,"
         "a_priori_rhs,final_energy\n";
  for (const auto& r : report.rows) {
    out << format_double(r.tau) << ',' << r.steps << ','
        << (std::isnan(r.sup_distance_to_next) ? std::string("nan") : format_double(r.sup_distance_to_next)) << ','
        << format_double(r.dissipation_sum) << ',' << format_double(r.g_increment_sum) << ','
        << format_double(r.g_increment_penalty) << ',' << format_double(r.lipschitz_estimate) << ','
        << format_double(r.a_priori_rhs) << ',' << format_double(r.final_energy) << '\n';
  }
}

void write_verify_json(std::ostream& out, const RunSummary& summary) {
  const VerificationReport& r = summary.report;
  const auto str = [](const std::string& v) {
    std::string q = "\"";
    for (char c : v) {
      if (c == '"' || c == '\\') q += '\\';
      if (c == '\n') { q += "\\n"; continue; }
      q += c;
    }
    return q + "\"";
  };
  const auto num = [](double v) { return std::isfinite(v) ? format_double(v) : std::string("null"); };
  const auto flag = [](bool v) { return std::string(v ? "true" : "false"); };

  std::vector<std::pair<std::string, std::string>> fields = {
      {"scenario", str(summary.scenario)},
      {"truncated", flag(summary.truncated)},
  };
  if (summary.truncated) fields.emplace_back("failure", str(summary.failure));
  fields.insert(fields.end(), {
      {"passed", flag(!summary.truncated && r.passed())},
      {"steps", std::to_string(r.steps)},
      {"lift_identity_max_error", num(r.lift_identity_max_error)},
      {"three_body_lift_max", num(r.three_body_lift_max)},
      {"per_step_inequality_min_slack", num(r.per_step_inequality_min_slack)},
      {"inclusion_residual_max", num(r.inclusion_residual_max)},
      {"grad_tol", num(r.grad_tol)},
      {"irreversibility_ok", flag(r.irreversibility_ok)},
      {"memory_consistent", flag(r.memory_consistent)},
      {"broken_sets_monotone", flag(r.broken_sets_monotone)},
      {"admissibility_ok", flag(r.admissibility_ok)},
      {"dissipation_sum", num(r.dissipation_sum)},
  });
  if (summary.has_crack) {
    const CrackDescriptor& c = summary.crack;
    fields.emplace_back("crack", "{\"kind\": " + str(to_string(c.kind)) +
                                     ", \"broken_nearest_bonds\": " + std::to_string(c.broken_count) +
                                     ", \"fraction_on_line\": " + num(c.fraction_on_line) +
                                     ", \"fraction_on_two_lines\": " + num(c.fraction_on_two_lines) +
                                     ", \"line_angle\": " + num(c.line_angle) + "}");
  }
  if (summary.has_stress) {
    fields.emplace_back("peak_stress", num(summary.peak_stress));
    fields.emplace_back("stress_normalization",
                        str("|sum of per-bond minimal-norm forces on the driven layer| / bonds with an endpoint in it (interpretation)"));
  }
  out << "{\n";
  for (std::size_t i = 0; i < fields.size(); ++i) {
    out << "  " << str(fields[i].first) << ": " << fields[i].second << (i + 1 < fields.size() ? ",\n" : "\n");
  }
  out << "}\n";
}

}  // namespace atomfrac
