#include "atomfrac/lattice.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <utility>

using namespace atomfrac;

namespace {

// Brute-force pair scan: every pair at distance ~ target.
std::set<std::pair<int, int>> pairs_at(const LatticeSystem& sys, double target) {
  std::set<std::pair<int, int>> out;
  for (int a = 0; a < sys.atom_count(); ++a) {
    for (int b = a + 1; b < sys.atom_count(); ++b) {
      if (std::abs((sys.position(a) - sys.position(b)).norm() - target) < 1e-9) out.insert({a, b});
    }
  }
  return out;
}

std::set<std::pair<int, int>> stored(const LatticeSystem& sys, BondKind kind) {
  std::set<std::pair<int, int>> out;
  for (const Bond& b : sys.bonds) {
    if (b.kind == kind) out.insert({b.a, b.b});
  }
  return out;
}

}  // namespace

TEST_CASE("chain geometry and boundary") {
  const LatticeSystem sys = build_chain(13, 1.0);
  CHECK(sys.atom_count() == 13);
  CHECK(sys.bonds.size() == 12);
  CHECK(sys.positions[0] == 1.0);
  CHECK(sys.positions[12] == 13.0);
  CHECK(sys.dirichlet == std::vector<AtomId>{0, 12});
  CHECK(sys.right_layer == std::vector<AtomId>{12});
  CHECK(sys.free_count() == 11);
  CHECK(stored(sys, BondKind::nearest) == pairs_at(sys, 1.0));

  const LatticeSystem left = build_chain(5, 0.5, DirichletSpec::left_end);
  CHECK(left.dirichlet == std::vector<AtomId>{0});
  CHECK(left.right_layer.empty());
  CHECK(left.free_count() == 4);
}

TEST_CASE("triangular bonds match a brute-force neighbor scan") {
  for (auto [rows, cols] : {std::pair{3, 3}, std::pair{4, 6}, std::pair{10, 15}}) {
    for (double spacing : {1.0, 0.7}) {
      const LatticeSystem sys = build_triangular(rows, cols, spacing, true);
      const auto nn = pairs_at(sys, spacing);
      CHECK(stored(sys, BondKind::nearest) == nn);
      CHECK(nn.size() == static_cast<std::size_t>(rows * (cols - 1) + (rows - 1) * cols + (rows - 1) * (cols - 1)));

      // next-nearest: opposite corners of a rhombus, i.e. the diagonal shares its midpoint with an NN bond
      std::set<std::pair<int, int>> nnn;
      for (auto [a, b] : pairs_at(sys, std::sqrt(3.0) * spacing)) {
        const Eigen::Vector2d mid = 0.5 * (sys.position(a) + sys.position(b));
        for (auto [c, d] : nn) {
          if ((0.5 * (sys.position(c) + sys.position(d)) - mid).norm() < 1e-9) nnn.insert({a, b});
        }
      }
      CHECK(stored(sys, BondKind::next_nearest) == nnn);
      for (const Bond& b : sys.bonds) {
        CHECK(b.rest_length == doctest::Approx((sys.position(b.a) - sys.position(b.b)).norm()).epsilon(1e-14));
      }
    }
  }
  const LatticeSystem plain = build_triangular(4, 5, 1.0, false);
  CHECK(stored(plain, BondKind::next_nearest).empty());
}

TEST_CASE("triangles are counter-clockwise and tile the patch") {
  const LatticeSystem sys = build_triangular(5, 7, 1.3, false);
  CHECK(sys.triangles.size() == 2u * 4u * 6u);
  double area = 0.0;
  for (const Triangle& t : sys.triangles) {
    const Eigen::Vector2d u = sys.position(t.b) - sys.position(t.a);
    const Eigen::Vector2d v = sys.position(t.c) - sys.position(t.a);
    const double det = u.x() * v.y() - u.y() * v.x();
    CHECK(det > 0.0);
    area += 0.5 * det;
  }
  // parallelogram spanned by (cols-1) e1 and (rows-1) e2
  CHECK(area == doctest::Approx(6 * 4 * 1.3 * 1.3 * std::sqrt(3.0) / 2.0));
}

TEST_CASE("triples use nearest arms and record the reference angle") {
  const LatticeSystem sys = build_triangular(4, 4, 1.0, true);
  std::size_t expected = 0;
  for (int c = 0; c < sys.atom_count(); ++c) {
    int degree = 0;
    for (const Bond& b : sys.bonds) degree += b.kind == BondKind::nearest && (b.a == c || b.b == c);
    expected += degree * (degree - 1) / 2;
  }
  CHECK(sys.triples.size() == expected);
  for (const Triple& t : sys.triples) {
    CHECK(sys.bonds[t.arm_bond1].kind == BondKind::nearest);
    CHECK(sys.bonds[t.arm_bond2].kind == BondKind::nearest);
    const double multiple = t.reference_angle / (std::numbers::pi / 3.0);
    CHECK(std::abs(multiple - std::round(multiple)) < 1e-12);
  }
}

TEST_CASE("Dirichlet columns and free maps") {
  const LatticeSystem sys = build_triangular(3, 4, 1.0, false);
  CHECK(sys.left_layer == std::vector<AtomId>{0, 4, 8});
  CHECK(sys.right_layer == std::vector<AtomId>{3, 7, 11});
  CHECK(sys.free_count() == 6);
  for (int i = 0; i < sys.atom_count(); ++i) {
    CHECK((sys.free_slot()[i] == -1) == sys.is_dirichlet(i));
    if (sys.free_slot()[i] >= 0) CHECK(sys.free_atoms()[sys.free_slot()[i]] == i);
  }

  Vector full = Vector::LinSpaced(sys.positions.size(), 0.0, 1.0);
  const Vector free = restrict_to_free(sys, full);
  CHECK(free.size() == 12);
  Vector back = Vector::Zero(full.size());
  scatter_free(sys, free, back);
  for (int i : sys.free_atoms()) CHECK(back.segment<2>(2 * i) == full.segment<2>(2 * i));
  for (int i : sys.dirichlet) CHECK(back.segment<2>(2 * i).isZero());
}

TEST_CASE("builders reject bad input") {
  CHECK_THROWS_AS(build_chain(1, 1.0), ConfigurationError);
  CHECK_THROWS_AS(build_chain(5, 0.0), ConfigurationError);
  CHECK_THROWS_AS(build_chain(5, 1.0, DirichletSpec::left_right_columns), ConfigurationError);
  CHECK_THROWS_AS(build_triangular(1, 5, 1.0, false), ConfigurationError);
  CHECK_THROWS_AS(build_triangular(3, 3, -1.0, false), ConfigurationError);
  CHECK_THROWS_AS(build_triangular(3, 3, 1.0, false, DirichletSpec::both_ends), ConfigurationError);
}
