#pragma once

#include "atomfrac/common.hpp"
#include "atomfrac/damage_energy.hpp"
#include "atomfrac/evolution.hpp"
#include "atomfrac/lattice.hpp"
#include "atomfrac/step_solver.hpp"

#include <string>
#include <vector>

namespace atomfrac {

struct VerificationReport {
  int steps = 0;
  double lift_identity_max_error = 0.0;  ///< relative, pair terms
  double three_body_lift_max = 0.0;      ///< absolute jump of the angle terms (informational)
  double per_step_inequality_min_slack = 0.0;
  double inclusion_residual_max = 0.0;
  double grad_tol = 0.0;
  bool irreversibility_ok = true;
  bool memory_consistent = true;   ///< stored M equals the running max recomputed from y
  bool broken_sets_monotone = true;
  bool admissibility_ok = true;    ///< only checked when a schedule is passed
  double dissipation_sum = 0.0;

  static constexpr double lift_tol = 1e-12;
  static constexpr double slack_tol = -1e-10;

  bool passed() const;
};

/// Recomputes the step assertions from the stored deformations alone.
VerificationReport verify_trace(const EvolutionTrace& trace, const LatticeSystem& sys, const Interactions& inter,
                                const Dissipation& d, double tau, const SolverSettings& settings = {},
                                const BoundarySchedule* schedule = nullptr);

struct StressStrainSample {
  int step = 0;
  double time = 0.0;
  double strain = 0.0;
  double stress = 0.0;
};

struct StressStrainCurve {
  std::vector<StressStrainSample> samples;
  int boundary_bonds = 0;  ///< normalization: bonds with an endpoint in the driven layer
};

/// Reaction force on the driven layer at y, evaluated with memory M: norm of the summed
/// minimal-norm gradient over the driven atoms, divided by the number of incident bonds.
double boundary_stress(const LatticeSystem& sys, const Interactions& inter, const DamageState& state,
                       const Vector& y, const std::vector<AtomId>& driven, double tie_tol = 1e-10);

/// Stress over the first stretching phase of the trace (while the boundary displacement grows).
/// Step k is evaluated with the memory that includes y_k.
StressStrainCurve stress_strain(const EvolutionTrace& trace, const LatticeSystem& sys, const Interactions& inter,
                                const BoundarySchedule& schedule, double tie_tol = 1e-10);

enum class CrackKind { none, single_line, kinked, diffuse };

const char* to_string(CrackKind kind);

struct CrackDescriptor {
  CrackKind kind = CrackKind::none;
  int broken_count = 0;
  double fraction_on_line = 0.0;       ///< best single line
  double fraction_on_two_lines = 0.0;  ///< best union of two lines
  double line_angle = 0.0;             ///< direction of the best single line (0, pi/3, 2 pi/3)
  double line_offset = 0.0;            ///< signed distance of that line from the origin
};

/// Fits broken nearest-bond midpoints (reference configuration) against lines in the three lattice
/// directions. on_line_tol is in units of the spacing.
CrackDescriptor classify_crack(const LatticeSystem& sys, const std::vector<int>& broken_bonds,
                               double on_line_tol = 0.3, double single_fraction = 0.9);

/// Uses the broken set of the last snapshot.
CrackDescriptor classify_crack(const EvolutionTrace& trace, const LatticeSystem& sys);

}  // namespace atomfrac
