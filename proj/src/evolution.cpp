#include "atomfrac/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace atomfrac {

BoundarySchedule BoundarySchedule::for_lattice(const LatticeSystem& sys, ScheduleKind kind, double amplitude,
                                               double angular_frequency, double angle, double final_time) {
  BoundarySchedule s;
  s.kind = kind;
  s.amplitude = amplitude;
  s.angular_frequency = angular_frequency;
  s.final_time = final_time;
  s.direction = Vector::Zero(sys.ambient_dim);
  s.direction[0] = std::cos(angle);
  if (sys.ambient_dim > 1) s.direction[1] = std::sin(angle);
  if (sys.ambient_dim == 1 && std::abs(std::sin(angle)) > 1e-12) {
    throw ConfigurationError("a chain can only be stretched along its axis");
  }
  s.moving_set = sys.right_layer;
  s.fixed_set = sys.left_layer;
  return s;
}

double BoundarySchedule::displacement(double t) const {
  switch (kind) {
    case ScheduleKind::sinusoidal_stretch: return amplitude * std::sin(angular_frequency * t);
    case ScheduleKind::linear_ramp: return amplitude * t / final_time;
    case ScheduleKind::hold: return 0.0;
  }
  return 0.0;
}

Vector sample_boundary(const BoundarySchedule& s, const LatticeSystem& sys, double t) {
  const double slack = 1e-12 * std::max(1.0, s.final_time);
  if (!(t >= -slack && t <= s.final_time + slack)) throw DomainError("time outside [0, T]");
  const int n = sys.ambient_dim;
  Vector g = Vector::Zero(sys.positions.size());
  for (AtomId i : s.fixed_set) g.segment(i * n, n) = sys.position(i);
  const double u = s.displacement(t);
  for (AtomId i : s.moving_set) g.segment(i * n, n) = sys.position(i) + u * s.direction;
  return g;
}

int step_count(double final_time, double tau) {
  if (!(tau > 0.0) || !(final_time > 0.0)) throw DomainError("T and tau must be positive");
  const double ratio = final_time / tau;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * rounded) {
    throw ConfigurationError("T / tau must be a positive integer");
  }
  return static_cast<int>(rounded);
}

namespace {

std::vector<int> broken_bonds(const LatticeSystem& sys, const Interactions& inter, const Vector& memory) {
  std::vector<int> out;
  for (std::size_t k = 0; k < sys.bonds.size(); ++k) {
    if (evaluate_phi(inter.transition(sys.bonds[k].kind), memory[k]) == 1.0) out.push_back(static_cast<int>(k));
  }
  return out;
}

double pair_scale(const LatticeSystem& sys, const Interactions& inter, const DamageState& state, const Vector& y) {
  double scale = 0.0;
  for (std::size_t k = 0; k < sys.bonds.size(); ++k) {
    const Bond& bond = sys.bonds[k];
    scale += std::abs(bond_energy(inter.pair(bond.kind), inter.transition(bond.kind), state.memory[k],
                                  bond_separation(sys, bond, y)));
  }
  return std::max(scale, std::numeric_limits<double>::min());
}

}  // namespace

EvolutionTrace run_evolution(const EvolutionSetup& setup) {
  const LatticeSystem& sys = setup.sys;
  const int n = sys.ambient_dim;
  const int steps = step_count(setup.final_time, setup.tau);
  if (setup.y0.size() != sys.positions.size()) throw ConfigurationError("initial deformation has the wrong size");

  const Vector g0 = sample_boundary(setup.schedule, sys, 0.0);
  for (AtomId i : sys.dirichlet) {
    if ((setup.y0.segment(i * n, n) - g0.segment(i * n, n)).norm() > 1e-12 * (1.0 + g0.segment(i * n, n).norm())) {
      throw ConfigurationError("initial deformation violates the boundary datum at t = 0");
    }
  }

  EvolutionTrace trace;
  trace.tau = setup.tau;
  DamageState state = DamageState::initial(sys, setup.y0);
  {
    StepRecord first;
    first.y = setup.y0;
    first.memory = state.memory;
    first.energy = total_energy(sys, setup.inter, state, setup.y0);
    first.objective = first.energy;
    first.broken_bonds = broken_bonds(sys, setup.inter, state.memory);
    trace.steps.push_back(std::move(first));
  }

  for (int k = 1; k <= steps; ++k) {
    const double t = k * setup.tau;
    const Vector g = sample_boundary(setup.schedule, sys, std::min(t, setup.final_time));
    const Vector& y_prev = trace.steps.back().y;
    StepResult result;
    try {
      result = solve_step({sys, setup.inter, state, y_prev, g, setup.tau, setup.dissipation}, setup.settings);
    } catch (const Error& e) {
      trace.truncated = true;
      trace.failure = "step " + std::to_string(k) + ": " + e.what();
      throw EvolutionFailure(trace.failure, trace);
    }

    StepRecord rec;
    rec.step = k;
    rec.time = t;
    rec.y = result.y_next;
    rec.residual_norm = result.residual_norm;
    rec.iterations = result.iterations;
    rec.tie_bonds = result.tie_bonds_at_solution;

    const double pair_before = pair_energy(sys, setup.inter, state, rec.y);
    const double angle_before = three_body_energy(sys, setup.inter, state, rec.y);
    const double scale = pair_scale(sys, setup.inter, state, rec.y);
    const Vector test = warm_start(sys, y_prev, g);
    const double test_bound = total_energy(sys, setup.inter, state, test) +
                              dissipation_value(setup.dissipation, sys, test, y_prev, setup.tau);
    rec.dissipated = dissipation_value(setup.dissipation, sys, rec.y, y_prev, setup.tau);
    rec.objective = pair_before + angle_before + rec.dissipated;
    rec.inequality_slack = test_bound - rec.objective;

    state = update_memory(state, sys, rec.y);
    const double pair_after = pair_energy(sys, setup.inter, state, rec.y);
    const double angle_after = three_body_energy(sys, setup.inter, state, rec.y);
    rec.lift_error = std::abs(pair_before - pair_after) / scale;
    rec.three_body_lift = std::abs(angle_before - angle_after);
    rec.energy = pair_after + angle_after;
    rec.memory = state.memory;
    rec.broken_bonds = broken_bonds(sys, setup.inter, state.memory);
    trace.steps.push_back(std::move(rec));
    if (setup.on_step) setup.on_step(trace.steps.back());
  }
  return trace;
}

Interpolants::Interpolants(const EvolutionTrace& trace) : trace_(trace) {
  if (trace.steps.empty()) throw ConfigurationError("empty trace");
}

double Interpolants::final_time() const { return trace_.tau * (static_cast<double>(trace_.steps.size()) - 1.0); }

int Interpolants::interval(double t) const {
  const int last = static_cast<int>(trace_.steps.size()) - 1;
  if (last == 0) return 0;
  const double pos = t / trace_.tau;
  int k = static_cast<int>(std::ceil(pos - 1e-9)) - 1;  // t in (t_k, t_{k+1}]
  return std::clamp(k, 0, last - 1);
}

Vector Interpolants::piecewise_constant(double t) const {
  if (trace_.steps.size() == 1 || t <= 0.0) return trace_.steps.front().y;
  return trace_.steps[interval(t) + 1].y;
}

Vector Interpolants::piecewise_affine(double t) const {
  if (trace_.steps.size() == 1) return trace_.steps.front().y;
  const int k = interval(t);
  const Vector& a = trace_.steps[k].y;
  const Vector& b = trace_.steps[k + 1].y;
  const double s = std::clamp((t - k * trace_.tau) / trace_.tau, 0.0, 1.0);
  return a + s * (b - a);
}

TauStudyReport refine_tau_study(const EvolutionSetup& setup, const std::vector<double>& taus) {
  if (taus.size() < 3) throw ConfigurationError("a tau study needs at least three time steps");
  for (std::size_t i = 1; i < taus.size(); ++i) {
    if (!(taus[i] < taus[i - 1])) throw ConfigurationError("tau values must be strictly decreasing");
  }

  std::vector<EvolutionTrace> traces;
  TauStudyReport report;
  for (double tau : taus) {
    EvolutionSetup run = setup;
    run.tau = tau;
    traces.push_back(run_evolution(run));
    const EvolutionTrace& trace = traces.back();

    TauStudyRow row;
    row.tau = tau;
    row.steps = static_cast<int>(trace.steps.size()) - 1;
    DamageState state = DamageState::initial(setup.sys, setup.y0);
    const double nu = setup.dissipation.viscosity;
    for (int k = 1; k <= row.steps; ++k) {
      const StepRecord& prev = trace.steps[k - 1];
      const StepRecord& cur = trace.steps[k];
      const Vector g_prev = sample_boundary(setup.schedule, setup.sys, prev.time);
      const Vector g_cur = sample_boundary(setup.schedule, setup.sys, std::min(cur.time, setup.final_time));
      const double dg = (g_cur - g_prev).norm();
      row.dissipation_sum += cur.dissipated;
      row.g_increment_sum += dg;
      row.g_increment_penalty += nu * dg * dg / (2.0 * tau);
      if (dg > 0.0) {
        const Vector test = warm_start(setup.sys, prev.y, g_cur);
        const double rise = total_energy(setup.sys, setup.inter, state, test) -
                            total_energy(setup.sys, setup.inter, state, prev.y);
        row.lipschitz_estimate = std::max(row.lipschitz_estimate, rise / dg);
      }
      state.memory = cur.memory;
    }
    row.final_energy = trace.steps.back().energy;
    row.a_priori_rhs = row.lipschitz_estimate * row.g_increment_sum + row.g_increment_penalty +
                       trace.steps.front().energy;
    row.sup_distance_to_next = std::numeric_limits<double>::quiet_NaN();
    report.rows.push_back(row);
  }

  for (std::size_t i = 0; i + 1 < traces.size(); ++i) {
    const Interpolants coarse(traces[i]);
    const Interpolants fine(traces[i + 1]);
    std::set<double> grid;
    for (const auto& s : traces[i].steps) grid.insert(s.time);
    for (const auto& s : traces[i + 1].steps) grid.insert(s.time);
    double sup = 0.0;
    for (double t : grid) sup = std::max(sup, (coarse.piecewise_affine(t) - fine.piecewise_affine(t)).norm());
    report.rows[i].sup_distance_to_next = sup;
  }
  report.distances_decreasing = true;
  for (std::size_t i = 1; i + 1 < report.rows.size(); ++i) {
    if (!(report.rows[i].sup_distance_to_next < report.rows[i - 1].sup_distance_to_next)) {
      report.distances_decreasing = false;
    }
  }
  return report;
}

}  // namespace atomfrac
