#pragma once

#include "atomfrac/common.hpp"
#include "atomfrac/damage_energy.hpp"
#include "atomfrac/lattice.hpp"
#include "atomfrac/step_solver.hpp"

#include <functional>
#include <string>
#include <vector>

namespace atomfrac {

enum class ScheduleKind { sinusoidal_stretch, linear_ramp, hold };

/// Time-dependent Dirichlet data. Fixed atoms stay at their reference position; moving atoms
/// are displaced by displacement(t) * direction.
///
/// sinusoidal_stretch: displacement = amplitude * sin(angular_frequency * t)
/// linear_ramp:        displacement = amplitude * t / final_time
/// hold:               displacement = 0
struct BoundarySchedule {
  ScheduleKind kind = ScheduleKind::hold;
  Vector direction;
  double amplitude = 0.0;
  double angular_frequency = 0.0;
  double final_time = 1.0;
  std::vector<AtomId> moving_set;
  std::vector<AtomId> fixed_set;

  /// Moving set = right layer, fixed set = left layer. `angle` is measured from the x axis.
  static BoundarySchedule for_lattice(const LatticeSystem& sys, ScheduleKind kind, double amplitude,
                                      double angular_frequency, double angle, double final_time);

  double displacement(double t) const;
};

/// g(t) as a full-length vector: prescribed positions on Dirichlet slots, zero elsewhere.
Vector sample_boundary(const BoundarySchedule& s, const LatticeSystem& sys, double t);

struct StepRecord {
  int step = 0;
  double time = 0.0;
  Vector y;
  Vector memory;                 ///< M after the update with y
  double energy = 0.0;           ///< E_k(y_k)
  double objective = 0.0;        ///< E_{k-1}(y_k) + dissipation
  double residual_norm = 0.0;
  double inequality_slack = 0.0; ///< test-function bound minus objective
  double dissipated = 0.0;       ///< dissipation_value(y_k, y_{k-1})
  double lift_error = 0.0;       ///< relative |E_{k-1}(y_k) - E_k(y_k)|, pair terms
  double three_body_lift = 0.0;  ///< same for the angle terms (not covered by the identity)
  int iterations = 0;
  std::vector<int> broken_bonds; ///< phi(M) == 1
  std::vector<int> tie_bonds;
};

struct EvolutionTrace {
  double tau = 0.0;
  std::vector<StepRecord> steps;  ///< steps[0] is the initial configuration
  bool truncated = false;
  std::string failure;
};

struct EvolutionSetup {
  LatticeSystem sys;
  Interactions inter;
  Vector y0;
  BoundarySchedule schedule;
  double tau = 1.0 / 60.0;
  double final_time = 1.0;
  Dissipation dissipation;
  SolverSettings settings;
  std::function<void(const StepRecord&)> on_step;  ///< optional progress hook
};

/// Solver failure during a run; carries everything computed up to the failing step.
class EvolutionFailure : public Error {
 public:
  EvolutionFailure(const std::string& what, EvolutionTrace partial) : Error(what), partial_(std::move(partial)) {}
  const EvolutionTrace& partial() const { return partial_; }

 private:
  EvolutionTrace partial_;
};

/// Number of steps T / tau; throws unless it is an integer up to 1e-9 relative.
int step_count(double final_time, double tau);

EvolutionTrace run_evolution(const EvolutionSetup& setup);

/// Piecewise-constant and piecewise-affine interpolation of a trace in time.
class Interpolants {
 public:
  explicit Interpolants(const EvolutionTrace& trace);

  /// y_{k+1} on (t_k, t_{k+1}]; y_0 at t = 0.
  Vector piecewise_constant(double t) const;
  /// y_k + (t - t_k) (y_{k+1} - y_k) / tau on [t_k, t_{k+1}].
  Vector piecewise_affine(double t) const;
  double final_time() const;

 private:
  int interval(double t) const;
  const EvolutionTrace& trace_;
};

struct TauStudyRow {
  double tau = 0.0;
  int steps = 0;
  double dissipation_sum = 0.0;      ///< sum of dissipated increments
  double g_increment_sum = 0.0;      ///< sum |g_k - g_{k-1}|
  double g_increment_penalty = 0.0;  ///< sum nu |g_k - g_{k-1}|^2 / 2 tau
  double lipschitz_estimate = 0.0;   ///< max (E_{k-1}(test) - E_{k-1}(y_{k-1})) / |g_k - g_{k-1}|
  double a_priori_rhs = 0.0;         ///< C sum|dg| + sum nu|dg|^2/2tau + E_0(y_0), with C as above
  double final_energy = 0.0;
  double sup_distance_to_next = 0.0; ///< max_t |yhat_tau - yhat_next| (NaN for the finest tau)
};

struct TauStudyReport {
  std::vector<TauStudyRow> rows;
  bool distances_decreasing = false;
};

/// Runs the same setup for each tau (decreasing, at least three entries) and compares
/// successive affine interpolants on the union of their time grids.
TauStudyReport refine_tau_study(const EvolutionSetup& setup, const std::vector<double>& taus);

}  // namespace atomfrac
