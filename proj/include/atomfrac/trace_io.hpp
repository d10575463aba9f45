#pragma once

#include "atomfrac/analysis.hpp"
#include "atomfrac/evolution.hpp"

#include <ostream>
#include <string>

namespace atomfrac {

/// %.17g; round-trips every double.
std::string format_double(double v);

/// step,time,atom_id,x[,y]; one row per atom and snapshot, step 0 included.
void write_trajectory_csv(std::ostream& out, const EvolutionTrace& trace, const LatticeSystem& sys);

/// step,bond_id,a,b,kind,rest_length,separation,memory,phi,branch. The branch is the active
/// piece of the energy that produced the step (memory before the update).
void write_bonds_csv(std::ostream& out, const EvolutionTrace& trace, const LatticeSystem& sys,
                     const Interactions& inter, double tie_tol = 1e-10);

void write_stress_strain_csv(std::ostream& out, const StressStrainCurve& curve);

void write_tau_study_csv(std::ostream& out, const TauStudyReport& report);

struct RunSummary {
  std::string scenario;
  bool truncated = false;
  std::string failure;
  VerificationReport report;
  bool has_crack = false;
  CrackDescriptor crack;
  bool has_stress = false;
  double peak_stress = 0.0;
};

void write_verify_json(std::ostream& out, const RunSummary& summary);

}  // namespace atomfrac
