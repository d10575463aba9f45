#include "atomfrac/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace atomfrac {

bool VerificationReport::passed() const {
  return lift_identity_max_error <= lift_tol && per_step_inequality_min_slack >= slack_tol &&
         inclusion_residual_max <= grad_tol && irreversibility_ok && memory_consistent && broken_sets_monotone &&
         admissibility_ok;
}

VerificationReport verify_trace(const EvolutionTrace& trace, const LatticeSystem& sys, const Interactions& inter,
                                const Dissipation& d, double tau, const SolverSettings& settings,
                                const BoundarySchedule* schedule) {
  if (trace.steps.empty()) throw ConfigurationError("empty trace");
  const std::size_t nb = sys.bonds.size();
  for (const StepRecord& s : trace.steps) {
    if (s.y.size() != sys.positions.size() || static_cast<std::size_t>(s.memory.size()) != nb) {
      throw ConfigurationError("trace does not match the lattice");
    }
  }
  const int n = sys.ambient_dim;
  const double barrier = settings.orientation_guard == OrientationGuard::barrier ? settings.barrier_weight : 0.0;

  VerificationReport report;
  report.steps = static_cast<int>(trace.steps.size()) - 1;
  report.grad_tol = settings.resolved_grad_tol(sys);
  report.per_step_inequality_min_slack = report.steps > 0 ? std::numeric_limits<double>::infinity() : 0.0;

  auto check_boundary = [&](const StepRecord& s) {
    if (schedule == nullptr) return;
    const Vector g = sample_boundary(*schedule, sys, std::min(s.time, schedule->final_time));
    for (AtomId i : sys.dirichlet) {
      if (s.y.segment(i * n, n) != g.segment(i * n, n)) report.admissibility_ok = false;
    }
  };

  DamageState state = DamageState::initial(sys, trace.steps.front().y);
  if (state.memory != trace.steps.front().memory) report.memory_consistent = false;
  check_boundary(trace.steps.front());

  for (std::size_t k = 1; k < trace.steps.size(); ++k) {
    const StepRecord& prev = trace.steps[k - 1];
    const StepRecord& cur = trace.steps[k];
    check_boundary(cur);

    const double residual = inclusion_residual(sys, inter, state, cur.y, prev.y, tau, d, settings.tie_tol, barrier);
    report.inclusion_residual_max = std::max(report.inclusion_residual_max, residual);

    const double pair_before = pair_energy(sys, inter, state, cur.y);
    const double angle_before = three_body_energy(sys, inter, state, cur.y);
    const double dissipated = dissipation_value(d, sys, cur.y, prev.y, tau);
    report.dissipation_sum += dissipated;

    // test function: previous deformation moved with the boundary
    Vector test = prev.y;
    for (AtomId i : sys.dirichlet) test.segment(i * n, n) = cur.y.segment(i * n, n);
    const double bound = total_energy(sys, inter, state, test) + dissipation_value(d, sys, test, prev.y, tau);
    report.per_step_inequality_min_slack =
        std::min(report.per_step_inequality_min_slack, bound - (pair_before + angle_before + dissipated));

    double scale = 0.0;
    for (std::size_t b = 0; b < sys.bonds.size(); ++b) {
      const Bond& bond = sys.bonds[b];
      scale += std::abs(bond_energy(inter.pair(bond.kind), inter.transition(bond.kind), state.memory[b],
                                    bond_separation(sys, bond, cur.y)));
    }
    scale = std::max(scale, std::numeric_limits<double>::min());

    const DamageState next = update_memory(state, sys, cur.y);
    for (std::size_t b = 0; b < nb; ++b) {
      if (cur.memory[b] < prev.memory[b] || cur.memory[b] < sys.bonds[b].rest_length) report.irreversibility_ok = false;
    }
    if (next.memory != cur.memory) report.memory_consistent = false;

    const double pair_after = pair_energy(sys, inter, next, cur.y);
    const double angle_after = three_body_energy(sys, inter, next, cur.y);
    report.lift_identity_max_error = std::max(report.lift_identity_max_error, std::abs(pair_before - pair_after) / scale);
    report.three_body_lift_max = std::max(report.three_body_lift_max, std::abs(angle_before - angle_after));

    if (!std::includes(cur.broken_bonds.begin(), cur.broken_bonds.end(), prev.broken_bonds.begin(),
                       prev.broken_bonds.end())) {
      report.broken_sets_monotone = false;
    }
    state = next;
  }
  return report;
}

namespace {

int incident_bonds(const LatticeSystem& sys, const std::vector<AtomId>& layer) {
  int count = 0;
  for (const Bond& b : sys.bonds) {
    const bool in_a = std::find(layer.begin(), layer.end(), b.a) != layer.end();
    const bool in_b = std::find(layer.begin(), layer.end(), b.b) != layer.end();
    if (in_a || in_b) ++count;
  }
  return count;
}

}  // namespace

double boundary_stress(const LatticeSystem& sys, const Interactions& inter, const DamageState& state,
                       const Vector& y, const std::vector<AtomId>& driven, double tie_tol) {
  if (driven.empty()) throw ConfigurationError("empty driven layer");
  const int n = sys.ambient_dim;
  const Vector grad = min_norm_gradient_all_slots(sys, inter, state, y, tie_tol);
  Vector force = Vector::Zero(n);
  for (AtomId i : driven) force += grad.segment(i * n, n);
  const int count = incident_bonds(sys, driven);
  if (count == 0) throw ConfigurationError("driven layer has no bonds to the interior");
  return force.norm() / count;
}

StressStrainCurve stress_strain(const EvolutionTrace& trace, const LatticeSystem& sys, const Interactions& inter,
                                const BoundarySchedule& schedule, double tie_tol) {
  if (schedule.moving_set.empty()) throw ConfigurationError("empty driven layer");
  if (trace.steps.empty()) throw ConfigurationError("empty trace");
  const int n = sys.ambient_dim;

  Vector driven_center = Vector::Zero(n);
  for (AtomId i : schedule.moving_set) driven_center += sys.position(i);
  driven_center /= static_cast<double>(schedule.moving_set.size());
  Vector fixed_center = Vector::Zero(n);
  if (!schedule.fixed_set.empty()) {
    for (AtomId i : schedule.fixed_set) fixed_center += sys.position(i);
    fixed_center /= static_cast<double>(schedule.fixed_set.size());
  } else {
    fixed_center = sys.position(0);
  }
  const double span = (driven_center - fixed_center).norm();
  if (!(span > 0.0)) throw ConfigurationError("degenerate reference span");

  StressStrainCurve curve;
  curve.boundary_bonds = incident_bonds(sys, schedule.moving_set);
  const AtomId probe = schedule.moving_set.front();
  DamageState state = DamageState::initial(sys, trace.steps.front().y);
  double last = -1.0;
  for (const StepRecord& s : trace.steps) {
    const double displacement = (s.y.segment(probe * n, n) - sys.position(probe)).norm();
    if (s.step > 0 && !(displacement > last)) break;
    last = displacement;
    StressStrainSample sample;
    sample.step = s.step;
    sample.time = s.time;
    sample.strain = displacement / span;
    // memory including y_k: a bond still opening sits on its kink, and the minimal-norm
    // element there carries only the (1 - phi) share of the force
    state.memory = s.memory;
    sample.stress = boundary_stress(sys, inter, state, s.y, schedule.moving_set, tie_tol);
    curve.samples.push_back(sample);
  }
  return curve;
}

const char* to_string(CrackKind kind) {
  switch (kind) {
    case CrackKind::none: return "none";
    case CrackKind::single_line: return "single_line";
    case CrackKind::kinked: return "kinked";
    case CrackKind::diffuse: return "diffuse";
  }
  return "none";
}

namespace {

struct LineFit {
  int direction = 0;
  double offset = 0.0;
  std::vector<bool> covered;
  int count = 0;
};

// Best line among the three lattice directions covering the points flagged in `active`.
LineFit best_line(const std::vector<Vector>& points, const std::vector<bool>& active, double tol) {
  LineFit best;
  best.covered.assign(points.size(), false);
  for (int dir = 0; dir < 3; ++dir) {
    const double angle = dir * std::numbers::pi / 3.0;
    const double nx = -std::sin(angle);
    const double ny = std::cos(angle);
    std::vector<double> proj(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) proj[i] = nx * points[i][0] + ny * points[i][1];
    for (std::size_t c = 0; c < points.size(); ++c) {
      if (!active[c]) continue;
      // candidate line through point c, then recentred on its inliers
      double offset = proj[c];
      for (int pass = 0; pass < 2; ++pass) {
        double sum = 0.0;
        int m = 0;
        for (std::size_t i = 0; i < points.size(); ++i) {
          if (active[i] && std::abs(proj[i] - offset) <= tol) {
            sum += proj[i];
            ++m;
          }
        }
        if (m > 0) offset = sum / m;
      }
      int m = 0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (active[i] && std::abs(proj[i] - offset) <= tol) ++m;
      }
      if (m > best.count) {
        best.count = m;
        best.direction = dir;
        best.offset = offset;
        for (std::size_t i = 0; i < points.size(); ++i) {
          best.covered[i] = active[i] && std::abs(proj[i] - offset) <= tol;
        }
      }
    }
  }
  return best;
}

}  // namespace

CrackDescriptor classify_crack(const LatticeSystem& sys, const std::vector<int>& broken_bonds, double on_line_tol,
                               double single_fraction) {
  if (sys.ambient_dim != 2) throw ConfigurationError("crack classification needs a planar lattice");
  std::vector<Vector> points;
  for (int b : broken_bonds) {
    if (b < 0 || b >= static_cast<int>(sys.bonds.size())) throw ConfigurationError("bond index out of range");
    const Bond& bond = sys.bonds[b];
    if (bond.kind != BondKind::nearest) continue;
    points.push_back(0.5 * (sys.position(bond.a) + sys.position(bond.b)));
  }
  CrackDescriptor out;
  out.broken_count = static_cast<int>(points.size());
  if (points.empty()) return out;

  const double tol = on_line_tol * sys.spacing;
  const double total = static_cast<double>(points.size());
  std::vector<bool> active(points.size(), true);
  const LineFit first = best_line(points, active, tol);
  out.fraction_on_line = first.count / total;
  out.line_angle = first.direction * std::numbers::pi / 3.0;
  out.line_offset = first.offset;

  for (std::size_t i = 0; i < points.size(); ++i) active[i] = !first.covered[i];
  const LineFit second = best_line(points, active, tol);
  out.fraction_on_two_lines = (first.count + second.count) / total;

  if (out.fraction_on_line >= single_fraction) {
    out.kind = CrackKind::single_line;
  } else if (out.fraction_on_two_lines >= single_fraction && second.direction != first.direction) {
    out.kind = CrackKind::kinked;
  } else {
    out.kind = CrackKind::diffuse;
  }
  return out;
}

CrackDescriptor classify_crack(const EvolutionTrace& trace, const LatticeSystem& sys) {
  if (trace.steps.empty()) return {};
  return classify_crack(sys, trace.steps.back().broken_bonds);
}

}  // namespace atomfrac
