#pragma once

#include "atomfrac/common.hpp"
#include "atomfrac/damage_energy.hpp"
#include "atomfrac/lattice.hpp"

#include <vector>

namespace atomfrac {

enum class DissipationKind { l2, kelvin_voigt };

/// Rate penalty of one incremental step.
///
/// l2:            (nu / 2 tau) |y - y_prev|^2 over every slot.
/// kelvin_voigt:  (nu / 2 tau) sum over nearest bonds of |(y_a - y_b) - (y_prev_a - y_prev_b)|^2 / eps^2,
///                which on a chain is |grad y - grad y_prev|^2 with the forward difference quotient.
struct Dissipation {
  DissipationKind kind = DissipationKind::l2;
  double viscosity = 0.1;
};

enum class OrientationGuard { off, barrier };

struct SolverSettings {
  double grad_tol = 0.0;  ///< <= 0 selects 1e-8 * sqrt(number of free atoms)
  int max_iters = 10000;
  double ls_shrink = 0.5;
  double ls_c1 = 1e-4;
  OrientationGuard orientation_guard = OrientationGuard::off;
  double barrier_weight = 0.0;
  double tie_tol = 1e-10;

  double resolved_grad_tol(const LatticeSystem& sys) const;
};

struct StepResult {
  Vector y_next;
  double objective = 0.0;
  double warm_start_objective = 0.0;
  double residual_norm = 0.0;
  int iterations = 0;
  std::vector<int> tie_bonds_at_solution;
  bool converged = false;
};

/// Raised when a step does not reach the tolerance; carries the best iterate found.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, StepResult best) : Error(what), best_(std::move(best)) {}
  const StepResult& best() const { return best_; }

 private:
  StepResult best_;
};

/// Everything a single incremental minimization depends on.
struct StepProblem {
  const LatticeSystem& sys;
  const Interactions& inter;
  const DamageState& state;  ///< memory of y_0 .. y_{k-1}
  const Vector& y_prev;
  const Vector& g_now;       ///< boundary values; only Dirichlet slots are read
  double tau = 1.0 / 60.0;
  Dissipation dissipation;
};

double dissipation_value(const Dissipation& d, const LatticeSystem& sys, const Vector& y, const Vector& y_prev,
                         double tau);

/// Gradient of dissipation_value with respect to y, over all slots.
Vector dissipation_gradient(const Dissipation& d, const LatticeSystem& sys, const Vector& y, const Vector& y_prev,
                            double tau);

/// y_prev with its Dirichlet slots replaced by g_now: y_{k-1} + g_k - g_{k-1}.
Vector warm_start(const LatticeSystem& sys, const Vector& y_prev, const Vector& g_now);

/// Free-slot norm of dissipation gradient + subgradient of the frozen energy at y, where each
/// tie bond may use any factor in [1 - phi(M), 1] (chosen to minimise the norm). Zero exactly
/// when y satisfies the discrete inclusion of the step.
double inclusion_residual(const LatticeSystem& sys, const Interactions& inter, const DamageState& state,
                          const Vector& y, const Vector& y_prev, double tau, const Dissipation& d,
                          double tie_tol = 1e-10, double barrier_weight = 0.0);

/// Minimises frozen energy + dissipation over the free atoms, starting from warm_start().
/// Throws NonConvergenceError when max_iters is exhausted.
StepResult solve_step(const StepProblem& problem, const SolverSettings& settings = {});

/// -w * sum log det over the lattice triangles (+inf once a triangle inverts).
double orientation_barrier(const LatticeSystem& sys, const Vector& y, double weight);

}  // namespace atomfrac
