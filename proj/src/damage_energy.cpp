#include "atomfrac/damage_energy.hpp"

#include "parallel.hpp"

namespace atomfrac {

Interactions Interactions::lennard_jones(double spacing, double nnn_scale, double r1_ratio, double r2_ratio,
                                         double delta_ratio) {
  Interactions inter;
  inter.nearest = PairPotential::nearest(spacing);
  inter.next_nearest = PairPotential::next_nearest(spacing, nnn_scale);
  auto thresholds = [&](double rest) {
    return TransitionFunction::make(r1_ratio * rest, r2_ratio * rest, delta_ratio * rest);
  };
  inter.phi_nearest = thresholds(inter.nearest.rest_length);
  inter.phi_next_nearest = thresholds(inter.next_nearest.rest_length);
  if (inter.phi_nearest.r1 <= inter.nearest.rest_length) {
    throw ConfigurationError("R1 must exceed the rest length of the bond");
  }
  return inter;
}

DamageState DamageState::initial(const LatticeSystem& sys, const Vector& y0) {
  DamageState state;
  state.memory.resize(static_cast<Eigen::Index>(sys.bonds.size()));
  for (std::size_t k = 0; k < sys.bonds.size(); ++k) state.memory[k] = sys.bonds[k].rest_length;
  return update_memory(state, sys, y0);
}

DamageState update_memory(const DamageState& state, const LatticeSystem& sys, const Vector& y) {
  DamageState next = state;
  for (std::size_t k = 0; k < sys.bonds.size(); ++k) {
    const double r = bond_separation(sys, sys.bonds[k], y);
    if (!std::isfinite(r)) throw NumericalError("non-finite separation on bond " + std::to_string(k));
    next.memory[k] = std::max({state.memory[k], r, sys.bonds[k].rest_length});
  }
  return next;
}

Branch classify_branch(double w_r, double w_memory, double tie_tol) {
  const double diff = w_r - w_memory;
  if (diff > tie_tol) return Branch::full;
  if (diff < -tie_tol) return Branch::soft;
  return Branch::tie;
}

namespace {

struct BondForce {
  double coefficient = 0.0;  // multiplies W'(r)
  double derivative = 0.0;   // W'(r)
  bool tie = false;
};

Vector assemble_all_slots(const LatticeSystem& sys, const Interactions& inter, const DamageState& state,
                          const Vector& y, double tie_tol, std::vector<int>* ties) {
  const int n = sys.ambient_dim;
  std::vector<BondForce> forces(sys.bonds.size());
  detail::parallel_for(sys.bonds.size(), [&](std::size_t k) {
    const Bond& bond = sys.bonds[k];
    const PairPotential& p = inter.pair(bond.kind);
    const double r = bond_separation(sys, bond, y);
    if (!(r > 0.0)) throw DomainError("coinciding atoms on bond " + std::to_string(k));
    const double m = state.memory[k];
    const double damage = evaluate_phi(inter.transition(bond.kind), m);
    const Branch branch = classify_branch(pair_value(p, r), pair_value(p, m), tie_tol);
    // Minimal norm: factor 1 on the full branch, 1 - phi on the soft branch and at ties.
    forces[k] = {branch == Branch::full ? 1.0 : 1.0 - damage, pair_derivative(p, r), branch == Branch::tie};
  });

  Vector gradient = Vector::Zero(y.size());
  for (std::size_t k = 0; k < sys.bonds.size(); ++k) {
    const Bond& bond = sys.bonds[k];
    if (forces[k].tie && ties != nullptr) ties->push_back(static_cast<int>(k));
    const double scale = forces[k].coefficient * forces[k].derivative;
    if (scale == 0.0) continue;
    const Vector diff = y.segment(bond.a * n, n) - y.segment(bond.b * n, n);
    const Vector z = diff / diff.norm();
    gradient.segment(bond.a * n, n) += scale * z;
    gradient.segment(bond.b * n, n) -= scale * z;
  }
  add_three_body_gradient(sys, inter, state, y, gradient);
  return gradient;
}

}  // namespace

void add_three_body_gradient(const LatticeSystem& sys, const Interactions& inter, const DamageState& state,
                             const Vector& y, Vector& gradient) {
  if (!inter.three_body || sys.triples.empty()) return;
  const int n = sys.ambient_dim;
  for (const Triple& t : sys.triples) {
    const double weight = triple_weight<double>(sys, inter, state, t);
    if (weight == 0.0) continue;
    const Vector u = y.segment(t.outer1 * n, n) - y.segment(t.center * n, n);
    const Vector v = y.segment(t.outer2 * n, n) - y.segment(t.center * n, n);
    const double nu = u.norm();
    const double nv = v.norm();
    if (!(nu > 0.0 && nv > 0.0)) throw NumericalError("coinciding atoms in a triple");
    // Differentiate cos(theta) directly: no arccos singularity at 0 or pi.
    const double c = u.dot(v) / (nu * nv);
    const double dw = weight * triple_dvalue_dcos(*inter.three_body, c,
                                                  inter.three_body->rest_angle_for(t.reference_angle));
    const Vector dc_du = v / (nu * nv) - c * u / (nu * nu);
    const Vector dc_dv = u / (nu * nv) - c * v / (nv * nv);
    gradient.segment(t.outer1 * n, n) += dw * dc_du;
    gradient.segment(t.outer2 * n, n) += dw * dc_dv;
    gradient.segment(t.center * n, n) -= dw * (dc_du + dc_dv);
  }
}

Subgradient min_norm_subgradient(const LatticeSystem& sys, const Interactions& inter, const DamageState& state,
                                 const Vector& y, double tie_tol) {
  Subgradient out;
  const Vector all = assemble_all_slots(sys, inter, state, y, tie_tol, &out.tie_bonds);
  out.min_norm = restrict_to_free(sys, all);
  return out;
}

Vector min_norm_gradient_all_slots(const LatticeSystem& sys, const Interactions& inter,
                                   const DamageState& state, const Vector& y, double tie_tol) {
  return assemble_all_slots(sys, inter, state, y, tie_tol, nullptr);
}

}  // namespace atomfrac
