#pragma once

#include "atomfrac/common.hpp"

#include <vector>

namespace atomfrac {

using AtomId = int;

enum class BondKind { nearest, next_nearest };

struct Bond {
  AtomId a = 0;
  AtomId b = 0;
  double rest_length = 0.0;
  BondKind kind = BondKind::nearest;
};

/// Angle interaction at `center` between the nearest-neighbor arms to `outer1` and `outer2`.
struct Triple {
  AtomId outer1 = 0;
  AtomId center = 0;
  AtomId outer2 = 0;
  int arm_bond1 = 0;  // bond index of (outer1, center)
  int arm_bond2 = 0;  // bond index of (center, outer2)
  double reference_angle = 0.0;
};

/// Elementary triangle of the triangular lattice, counter-clockwise in the reference.
struct Triangle {
  AtomId a = 0;
  AtomId b = 0;
  AtomId c = 0;
};

enum class DirichletSpec { both_ends, left_end, left_right_columns };

/// Reference configuration plus interaction graph. Immutable after construction.
///
/// Coordinates are flat: atom i occupies slots [i*n, (i+1)*n) with n = ambient_dim.
/// Atoms keep their geometric numbering; the Dirichlet set is an explicit index list.
struct LatticeSystem {
  int dimension = 1;
  int ambient_dim = 1;
  double spacing = 1.0;
  Vector positions;
  std::vector<Bond> bonds;
  std::vector<Triple> triples;
  std::vector<Triangle> triangles;
  std::vector<AtomId> dirichlet;   // sorted
  std::vector<AtomId> left_layer;  // fixed side of the Dirichlet set
  std::vector<AtomId> right_layer; // driven side of the Dirichlet set

  int atom_count() const { return static_cast<int>(positions.size()) / ambient_dim; }
  int free_count() const { return atom_count() - static_cast<int>(dirichlet.size()); }
  bool is_dirichlet(AtomId i) const;

  /// free_slot()[i] is the position of atom i among free atoms, or -1 for Dirichlet atoms.
  const std::vector<int>& free_slot() const { return free_slot_; }
  const std::vector<AtomId>& free_atoms() const { return free_atoms_; }

  auto position(AtomId i) const { return positions.segment(i * ambient_dim, ambient_dim); }

  /// Recomputes the free-atom index maps; called by the builders.
  void finalize();

 private:
  std::vector<int> free_slot_;
  std::vector<AtomId> free_atoms_;
};

/// Chain x_i = i * spacing, i = 1..count, with nearest-neighbor bonds only.
LatticeSystem build_chain(int count, double spacing, DirichletSpec dirichlet = DirichletSpec::both_ends);

/// rows x cols parallelogram patch of spacing * A Z^2, A = [[1, 1/2], [0, sqrt(3)/2]].
/// Atom (i, j) sits at spacing * (i + j/2, j*sqrt(3)/2) and has index j*cols + i.
LatticeSystem build_triangular(int rows, int cols, double spacing, bool include_nnn,
                               DirichletSpec dirichlet = DirichletSpec::left_right_columns);

/// Restricts a full coordinate vector to the free slots.
Vector restrict_to_free(const LatticeSystem& sys, const Vector& full);

/// Writes `free_values` into the free slots of `full`.
void scatter_free(const LatticeSystem& sys, const Vector& free_values, Vector& full);

}  // namespace atomfrac
