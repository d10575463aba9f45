#include "atomfrac/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <utility>

namespace atomfrac {

bool LatticeSystem::is_dirichlet(AtomId i) const {
  return std::binary_search(dirichlet.begin(), dirichlet.end(), i);
}

void LatticeSystem::finalize() {
  std::sort(dirichlet.begin(), dirichlet.end());
  dirichlet.erase(std::unique(dirichlet.begin(), dirichlet.end()), dirichlet.end());
  const int n_atoms = atom_count();
  free_slot_.assign(n_atoms, -1);
  free_atoms_.clear();
  for (AtomId i = 0; i < n_atoms; ++i) {
    if (!is_dirichlet(i)) {
      free_slot_[i] = static_cast<int>(free_atoms_.size());
      free_atoms_.push_back(i);
    }
  }
  for (const Bond& bond : bonds) {
    if (bond.a == bond.b || bond.a < 0 || bond.b < 0 || bond.a >= n_atoms || bond.b >= n_atoms) {
      throw ConfigurationError("bond references an invalid atom");
    }
  }
  if (dirichlet.empty()) throw ConfigurationError("the Dirichlet set must not be empty");
}

LatticeSystem build_chain(int count, double spacing, DirichletSpec dirichlet) {
  if (count < 2) throw ConfigurationError("a chain needs at least 2 atoms");
  if (!(spacing > 0.0)) throw ConfigurationError("lattice spacing must be positive");

  LatticeSystem sys;
  sys.dimension = 1;
  sys.ambient_dim = 1;
  sys.spacing = spacing;
  sys.positions.resize(count);
  for (int i = 0; i < count; ++i) sys.positions[i] = (i + 1) * spacing;
  for (int i = 0; i + 1 < count; ++i) sys.bonds.push_back({i, i + 1, spacing, BondKind::nearest});

  switch (dirichlet) {
    case DirichletSpec::both_ends:
      sys.dirichlet = {0, count - 1};
      sys.left_layer = {0};
      sys.right_layer = {count - 1};
      break;
    case DirichletSpec::left_end:
      sys.dirichlet = {0};
      sys.left_layer = {0};
      break;
    case DirichletSpec::left_right_columns:
      throw ConfigurationError("left_right_columns applies to triangular lattices only");
  }
  sys.finalize();
  return sys;
}

LatticeSystem build_triangular(int rows, int cols, double spacing, bool include_nnn,
                               DirichletSpec dirichlet) {
  if (rows < 2 || cols < 2) throw ConfigurationError("a triangular patch needs rows, cols >= 2");
  if (!(spacing > 0.0)) throw ConfigurationError("lattice spacing must be positive");
  if (dirichlet != DirichletSpec::left_right_columns) {
    throw ConfigurationError("triangular lattices clamp the left and right columns");
  }

  const double h = std::sqrt(3.0) / 2.0;
  const int n_atoms = rows * cols;
  auto id = [cols](int i, int j) { return j * cols + i; };
  auto inside = [rows, cols](int i, int j) { return i >= 0 && i < cols && j >= 0 && j < rows; };

  LatticeSystem sys;
  sys.dimension = 2;
  sys.ambient_dim = 2;
  sys.spacing = spacing;
  sys.positions.resize(2 * n_atoms);
  for (int j = 0; j < rows; ++j) {
    for (int i = 0; i < cols; ++i) {
      sys.positions[2 * id(i, j)] = spacing * (i + 0.5 * j);
      sys.positions[2 * id(i, j) + 1] = spacing * h * j;
    }
  }

  // Nearest neighbors along e1, e2 and e2 - e1.
  const std::pair<int, int> nn_offsets[] = {{1, 0}, {0, 1}, {-1, 1}};
  std::vector<std::set<AtomId>> neighbors(n_atoms);
  for (int j = 0; j < rows; ++j) {
    for (int i = 0; i < cols; ++i) {
      for (auto [di, dj] : nn_offsets) {
        if (!inside(i + di, j + dj)) continue;
        const AtomId a = std::min(id(i, j), id(i + di, j + dj));
        const AtomId b = std::max(id(i, j), id(i + di, j + dj));
        sys.bonds.push_back({a, b, spacing, BondKind::nearest});
        neighbors[a].insert(b);
        neighbors[b].insert(a);
      }
    }
  }

  if (include_nnn) {
    // Candidates at distance sqrt(3)*spacing; kept only when opposite to a shared edge.
    const std::pair<int, int> nnn_offsets[] = {{1, 1}, {-1, 2}, {2, -1}};
    for (int j = 0; j < rows; ++j) {
      for (int i = 0; i < cols; ++i) {
        for (auto [di, dj] : nnn_offsets) {
          if (!inside(i + di, j + dj)) continue;
          const AtomId a = std::min(id(i, j), id(i + di, j + dj));
          const AtomId b = std::max(id(i, j), id(i + di, j + dj));
          int shared = 0;
          for (AtomId c : neighbors[a]) shared += static_cast<int>(neighbors[b].count(c));
          if (shared == 2) sys.bonds.push_back({a, b, std::sqrt(3.0) * spacing, BondKind::next_nearest});
        }
      }
    }
  }

  std::sort(sys.bonds.begin(), sys.bonds.end(), [](const Bond& l, const Bond& r) {
    if (l.kind != r.kind) return l.kind == BondKind::nearest;
    return std::pair(l.a, l.b) < std::pair(r.a, r.b);
  });

  // Triples: every unordered pair of nearest-neighbor arms at a common center.
  auto nn_bond_index = [&sys](AtomId a, AtomId b) {
    const auto key = std::pair(std::min(a, b), std::max(a, b));
    for (std::size_t k = 0; k < sys.bonds.size(); ++k) {
      const Bond& bond = sys.bonds[k];
      if (bond.kind == BondKind::nearest && std::pair(bond.a, bond.b) == key) return static_cast<int>(k);
    }
    throw ConfigurationError("missing nearest-neighbor bond");
  };
  for (AtomId center = 0; center < n_atoms; ++center) {
    const std::vector<AtomId> arms(neighbors[center].begin(), neighbors[center].end());
    for (std::size_t p = 0; p < arms.size(); ++p) {
      for (std::size_t q = p + 1; q < arms.size(); ++q) {
        Triple t{arms[p], center, arms[q], nn_bond_index(arms[p], center), nn_bond_index(center, arms[q]), 0.0};
        const Eigen::Vector2d u = sys.position(t.outer1) - sys.position(center);
        const Eigen::Vector2d v = sys.position(t.outer2) - sys.position(center);
        t.reference_angle = std::acos(std::clamp(u.dot(v) / (u.norm() * v.norm()), -1.0, 1.0));
        sys.triples.push_back(t);
      }
    }
  }

  for (int j = 0; j + 1 < rows; ++j) {
    for (int i = 0; i + 1 < cols; ++i) {
      sys.triangles.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
      sys.triangles.push_back({id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }

  for (int j = 0; j < rows; ++j) {
    sys.left_layer.push_back(id(0, j));
    sys.right_layer.push_back(id(cols - 1, j));
  }
  sys.dirichlet = sys.left_layer;
  sys.dirichlet.insert(sys.dirichlet.end(), sys.right_layer.begin(), sys.right_layer.end());
  sys.finalize();
  return sys;
}

Vector restrict_to_free(const LatticeSystem& sys, const Vector& full) {
  const int n = sys.ambient_dim;
  Vector out(sys.free_count() * n);
  const auto& atoms = sys.free_atoms();
  for (std::size_t k = 0; k < atoms.size(); ++k) out.segment(k * n, n) = full.segment(atoms[k] * n, n);
  return out;
}

void scatter_free(const LatticeSystem& sys, const Vector& free_values, Vector& full) {
  const int n = sys.ambient_dim;
  const auto& atoms = sys.free_atoms();
  for (std::size_t k = 0; k < atoms.size(); ++k) full.segment(atoms[k] * n, n) = free_values.segment(k * n, n);
}

}  // namespace atomfrac
