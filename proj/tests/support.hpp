#pragma once

#include "atomfrac/damage_energy.hpp"
#include "atomfrac/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

namespace atomfrac::testing {

// Randomized small chain scenario: 3-10 atoms, random schedule, dissipation and thresholds.
inline EvolutionSetup random_chain(std::mt19937_64& rng) {
  auto uniform = [&rng](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  const int count = std::uniform_int_distribution<int>(3, 10)(rng);
  EvolutionSetup setup;
  setup.sys = build_chain(count, 1.0);
  const double r1 = uniform(1.05, 1.3);
  const double r2 = rng() % 2 ? r1 : r1 + uniform(0.01, 0.2);
  setup.inter = Interactions::lennard_jones(1.0, 0.25, r1, r2, 1e-6);
  setup.y0 = setup.sys.positions;

  const double taus[] = {1.0 / 20.0, 1.0 / 30.0, 1.0 / 60.0};
  setup.tau = taus[rng() % 3];
  setup.final_time = std::round(uniform(0.5, 3.0) / setup.tau) * setup.tau;
  // amplitudes from purely elastic up to a few broken bonds; the compressive half of a sine is
  // kept above 3/4 of the rest length on average (deeper, the gradient of the stiff repulsive
  // wall cannot be resolved to the absolute tolerance in double precision)
  const double amplitude = uniform(0.0, 0.4 * count);
  const int kind = static_cast<int>(rng() % 3);
  if (kind == 0) {
    const double sine_amplitude = std::min(amplitude, 0.25 * (count - 1));
    setup.schedule = BoundarySchedule::for_lattice(setup.sys, ScheduleKind::sinusoidal_stretch, sine_amplitude,
                                                   uniform(0.5, 3.0), 0.0, setup.final_time);
  } else if (kind == 1) {
    setup.schedule = BoundarySchedule::for_lattice(setup.sys, ScheduleKind::linear_ramp, amplitude, 0.0, 0.0,
                                                   setup.final_time);
  } else {
    setup.schedule = BoundarySchedule::for_lattice(setup.sys, ScheduleKind::hold, 0.0, 0.0, 0.0, setup.final_time);
  }
  setup.dissipation.kind = rng() % 2 ? DissipationKind::l2 : DissipationKind::kelvin_voigt;
  setup.dissipation.viscosity = uniform(0.01, 1.0);
  return setup;
}

}  // namespace atomfrac::testing

namespace atomfrac::testing {

struct OracleResult {
  double worst_relative_error = 0.0;
  int configurations = 0;
  int rejected = 0;
};

// Random perturbed configuration with random memory, kept only when every damaged bond is
// far from its kinks so that the energy is smooth over the finite-difference stencil.
inline bool random_tie_free_state(const LatticeSystem& sys, const Interactions& inter, std::mt19937_64& rng,
                                  Vector& y, DamageState& state) {
  auto uniform = [&rng](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  y = sys.positions;
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += uniform(-0.12, 0.12) * sys.spacing;
  state.memory.resize(static_cast<Eigen::Index>(sys.bonds.size()));
  for (std::size_t k = 0; k < sys.bonds.size(); ++k) {
    const double rest = sys.bonds[k].rest_length;
    state.memory[k] = rng() % 3 == 0 ? rest : rest * uniform(1.0, 1.6);
    const double phi = evaluate_phi(inter.transition(sys.bonds[k].kind), state.memory[k]);
    if (phi == 0.0) continue;
    const auto& p = inter.pair(sys.bonds[k].kind);
    if (std::abs(pair_value(p, bond_separation(sys, sys.bonds[k], y)) - pair_value(p, state.memory[k])) < 1e-3) {
      return false;
    }
  }
  return true;
}

inline double finite_difference_error(const LatticeSystem& sys, const Interactions& inter, const Vector& y,
                                      const DamageState& state) {
  const Vector g = min_norm_subgradient(sys, inter, state, y).min_norm;
  const int n = sys.ambient_dim;
  Vector fd(g.size());
  VectorX<long double> yl = y.cast<long double>();
  const long double h = 1e-6L;
  for (std::size_t a = 0; a < sys.free_atoms().size(); ++a) {
    for (int c = 0; c < n; ++c) {
      const Eigen::Index slot = sys.free_atoms()[a] * n + c;
      const long double keep = yl[slot];
      yl[slot] = keep + h;
      const long double up = total_energy<long double>(sys, inter, state, yl);
      yl[slot] = keep - h;
      const long double down = total_energy<long double>(sys, inter, state, yl);
      yl[slot] = keep;
      fd[static_cast<Eigen::Index>(a) * n + c] = static_cast<double>((up - down) / (2 * h));
    }
  }
  return (g - fd).norm() / std::max(fd.norm(), 1e-300);
}

inline OracleResult gradient_oracle(const LatticeSystem& sys, const Interactions& inter, int configurations,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  OracleResult out;
  Vector y;
  DamageState state;
  while (out.configurations < configurations) {
    if (!random_tie_free_state(sys, inter, rng, y, state)) {
      ++out.rejected;
      continue;
    }
    out.worst_relative_error = std::max(out.worst_relative_error, finite_difference_error(sys, inter, y, state));
    ++out.configurations;
  }
  return out;
}

}  // namespace atomfrac::testing
