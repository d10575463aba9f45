#pragma once

#include "atomfrac/common.hpp"
#include "atomfrac/lattice.hpp"
#include "atomfrac/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace atomfrac {

enum class TransitionShape { piecewise_linear };

/// Damage interpolation phi: 0 up to r1, 1 from r2 on, linear in between.
struct TransitionFunction {
  double r1 = 1.2;
  double r2 = 1.2 + 1e-6;
  TransitionShape shape = TransitionShape::piecewise_linear;

  /// r2 == r1 is widened to r1 + delta so that phi stays continuous.
  static TransitionFunction make(double r1, double r2, double delta) {
    if (r2 < r1) throw ConfigurationError("R2 must not be smaller than R1");
    if (r2 == r1) {
      if (!(delta > 0.0)) throw ConfigurationError("R2 == R1 requires a positive widening delta");
      r2 = r1 + delta;
    }
    return {r1, r2, TransitionShape::piecewise_linear};
  }
};

template <typename Scalar>
Scalar evaluate_phi(const TransitionFunction& phi, Scalar m) {
  if (m <= Scalar(phi.r1)) return Scalar(0);
  if (m >= Scalar(phi.r2)) return Scalar(1);
  return (m - Scalar(phi.r1)) / Scalar(phi.r2 - phi.r1);
}

/// Potentials and damage thresholds per bond kind, plus the optional angle term.
struct Interactions {
  PairPotential nearest;
  PairPotential next_nearest;
  TransitionFunction phi_nearest;
  TransitionFunction phi_next_nearest;
  std::optional<TriplePotential> three_body;

  const PairPotential& pair(BondKind kind) const {
    return kind == BondKind::nearest ? nearest : next_nearest;
  }
  const TransitionFunction& transition(BondKind kind) const {
    return kind == BondKind::nearest ? phi_nearest : phi_next_nearest;
  }

  /// Lennard-Jones pair terms for a lattice of the given spacing. Thresholds are
  /// given as multiples of each bond's rest length.
  static Interactions lennard_jones(double spacing, double nnn_scale, double r1_ratio,
                                    double r2_ratio, double delta_ratio);
};

/// Per-bond maximal opening M, floored at the rest length.
struct DamageState {
  Vector memory;

  /// History {y0}: M = max(rest_length, |y0(a) - y0(b)|).
  static DamageState initial(const LatticeSystem& sys, const Vector& y0);
};

template <typename Scalar>
Scalar bond_separation(const LatticeSystem& sys, const Bond& bond, const VectorX<Scalar>& y) {
  const int n = sys.ambient_dim;
  return (y.segment(bond.a * n, n) - y.segment(bond.b * n, n)).norm();
}

/// M <- max(M, |y(a) - y(b)|) for every bond.
DamageState update_memory(const DamageState& state, const LatticeSystem& sys, const Vector& y);

/// (1 - phi(M)) W(r) + phi(M) (W(r) v W(M)).
template <typename Scalar>
Scalar bond_energy(const PairPotential& p, const TransitionFunction& phi, Scalar memory, Scalar r) {
  const Scalar w = pair_value(p, r);
  const Scalar damage = evaluate_phi(phi, memory);
  if (damage == Scalar(0)) return w;
  const Scalar w_memory = pair_value(p, memory);
  return (Scalar(1) - damage) * w + damage * std::max(w, w_memory);
}

/// cos of the angle at `center`; unit vectors are used so the value stays in [-1, 1].
template <typename Scalar>
Scalar triple_cosine(const LatticeSystem& sys, const Triple& t, const VectorX<Scalar>& y) {
  const int n = sys.ambient_dim;
  const VectorX<Scalar> u = y.segment(t.outer1 * n, n) - y.segment(t.center * n, n);
  const VectorX<Scalar> v = y.segment(t.outer2 * n, n) - y.segment(t.center * n, n);
  const Scalar nu = u.norm();
  const Scalar nv = v.norm();
  if (!(nu > Scalar(0) && nv > Scalar(0))) throw NumericalError("coinciding atoms in a triple");
  return std::clamp(Scalar(u.dot(v) / (nu * nv)), Scalar(-1), Scalar(1));
}

/// Weight [1 - (phi(M_arm1) v phi(M_arm2))] of an angle term.
template <typename Scalar>
Scalar triple_weight(const LatticeSystem& sys, const Interactions& inter, const DamageState& state,
                     const Triple& t) {
  const auto& b1 = sys.bonds[t.arm_bond1];
  const auto& b2 = sys.bonds[t.arm_bond2];
  const Scalar d1 = evaluate_phi(inter.transition(b1.kind), Scalar(state.memory[t.arm_bond1]));
  const Scalar d2 = evaluate_phi(inter.transition(b2.kind), Scalar(state.memory[t.arm_bond2]));
  return Scalar(1) - std::max(d1, d2);
}

/// Pair part of the history-dependent energy, one term per stored bond.
template <typename Scalar>
Scalar pair_energy(const LatticeSystem& sys, const Interactions& inter, const DamageState& state,
                   const VectorX<Scalar>& y) {
  Scalar total(0);
  for (std::size_t k = 0; k < sys.bonds.size(); ++k) {
    const Bond& bond = sys.bonds[k];
    const Scalar r = bond_separation(sys, bond, y);
    if (!(r > Scalar(0)) || !std::isfinite(static_cast<double>(r))) {
      throw NumericalError("coinciding or non-finite atoms on bond " + std::to_string(k));
    }
    total += bond_energy(inter.pair(bond.kind), inter.transition(bond.kind), Scalar(state.memory[k]), r);
  }
  return total;
}

template <typename Scalar>
Scalar three_body_energy(const LatticeSystem& sys, const Interactions& inter, const DamageState& state,
                         const VectorX<Scalar>& y) {
  if (!inter.three_body || sys.triples.empty()) return Scalar(0);
  Scalar total(0);
  for (const Triple& t : sys.triples) {
    const Scalar weight = triple_weight<Scalar>(sys, inter, state, t);
    if (weight == Scalar(0)) continue;
    const double rest = inter.three_body->rest_angle_for(t.reference_angle);
    total += weight * triple_value_cos(*inter.three_body, triple_cosine(sys, t, y), rest);
  }
  return total;
}

/// Sum of bond energies plus weighted angle terms. Each pair is stored once, so no 1/2 factor.
template <typename Scalar>
Scalar total_energy(const LatticeSystem& sys, const Interactions& inter, const DamageState& state,
                    const VectorX<Scalar>& y) {
  return pair_energy(sys, inter, state, y) + three_body_energy(sys, inter, state, y);
}

inline double total_energy(const LatticeSystem& sys, const Interactions& inter, const DamageState& state,
                           const Vector& y) {
  return total_energy<double>(sys, inter, state, y);
}

/// Which smooth piece of the bond energy is active at the current separation.
enum class Branch {
  full,  ///< W(r) > W(M): the plain potential
  soft,  ///< W(r) < W(M): (1 - phi) W(r) + phi W(M)
  tie,   ///< |W(r) - W(M)| <= tie_tol: interval-valued subdifferential
};

Branch classify_branch(double w_r, double w_memory, double tie_tol);

struct Subgradient {
  Vector min_norm;             ///< over free slots
  std::vector<int> tie_bonds;  ///< bond indices with |W(M) - W(r)| <= tie_tol
};

/// Minimal-norm element of the subdifferential with respect to the free atoms.
Subgradient min_norm_subgradient(const LatticeSystem& sys, const Interactions& inter,
                                 const DamageState& state, const Vector& y, double tie_tol = 1e-10);

/// Same selection, assembled over every slot including the Dirichlet atoms.
Vector min_norm_gradient_all_slots(const LatticeSystem& sys, const Interactions& inter,
                                   const DamageState& state, const Vector& y, double tie_tol = 1e-10);

/// Gradient of the angle terms over all slots (smooth everywhere away from coinciding atoms).
void add_three_body_gradient(const LatticeSystem& sys, const Interactions& inter, const DamageState& state,
                             const Vector& y, Vector& gradient);

}  // namespace atomfrac
