#include "atomfrac/step_solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>

namespace atomfrac {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double triangle_det(const Vector& y, const Triangle& t) {
  const double ax = y[2 * t.a], ay = y[2 * t.a + 1];
  const double bx = y[2 * t.b], by = y[2 * t.b + 1];
  const double cx = y[2 * t.c], cy = y[2 * t.c + 1];
  return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
}

/// Gradient of -w log det with respect to (a, b, c), 6 entries.
Eigen::Matrix<double, 6, 1> barrier_local_gradient(const Eigen::Matrix<double, 6, 1>& p, double weight) {
  const double ax = p[0], ay = p[1], bx = p[2], by = p[3], cx = p[4], cy = p[5];
  const double det = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
  Eigen::Matrix<double, 6, 1> g;
  g << by - cy, cx - bx, cy - ay, ax - cx, ay - by, bx - ax;
  return -weight * g / det;
}

/// Gradient of the angle term with respect to (outer1, center, outer2).
Vector triple_local_gradient(const Vector& p, int n, const TriplePotential& t, double rest, double weight) {
  const Vector u = p.segment(0, n) - p.segment(n, n);
  const Vector v = p.segment(2 * n, n) - p.segment(n, n);
  const double nu = u.norm();
  const double nv = v.norm();
  const double c = u.dot(v) / (nu * nv);
  const double dw = weight * triple_dvalue_dcos(t, c, rest);
  const Vector dc_du = v / (nu * nv) - c * u / (nu * nu);
  const Vector dc_dv = u / (nu * nv) - c * v / (nv * nv);
  Vector g(3 * n);
  g.segment(0, n) = dw * dc_du;
  g.segment(n, n) = -dw * (dc_du + dc_dv);
  g.segment(2 * n, n) = dw * dc_dv;
  return g;
}

/// Central-difference Jacobian of a local gradient; used for the small angle/barrier blocks.
template <typename GradFn>
Matrix local_hessian(const Vector& p, double step, GradFn&& grad) {
  const Eigen::Index m = p.size();
  Matrix h(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    Vector plus = p, minus = p;
    plus[j] += step;
    minus[j] -= step;
    h.col(j) = (grad(plus) - grad(minus)) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

enum class Piece { full, soft };

struct ActiveKink {
  int bond = 0;
  double radius = 0.0;
};

class StepObjective {
 public:
  StepObjective(const StepProblem& p, const SolverSettings& s)
      : sys_(p.sys), inter_(p.inter), state_(p.state), y_prev_(p.y_prev), tau_(p.tau), diss_(p.dissipation),
        settings_(s), n_(p.sys.ambient_dim) {
    base_ = warm_start(sys_, y_prev_, p.g_now);
    const std::size_t nb = sys_.bonds.size();
    damage_.resize(nb);
    w_memory_.resize(nb);
    kink_low_.assign(nb, -1.0);
    for (std::size_t k = 0; k < nb; ++k) {
      const Bond& bond = sys_.bonds[k];
      damage_[k] = evaluate_phi(inter_.transition(bond.kind), state_.memory[k]);
      w_memory_[k] = pair_value(inter_.pair(bond.kind), state_.memory[k]);
    }
    barrier_on_ = s.orientation_guard == OrientationGuard::barrier && s.barrier_weight > 0.0 &&
                  sys_.ambient_dim == 2 && !sys_.triangles.empty();
  }

  int dim() const { return sys_.free_count() * n_; }
  const Vector& base() const { return base_; }
  double damage(int bond) const { return damage_[bond]; }
  double w_memory(int bond) const { return w_memory_[bond]; }
  const PairPotential& pot(int bond) const { return inter_.pair(sys_.bonds[bond].kind); }

  Vector expand(const Vector& x) const {
    Vector y = base_;
    scatter_free(sys_, x, y);
    return y;
  }

  double separation(const Vector& y, int bond) const {
    return bond_separation(sys_, sys_.bonds[bond], y);
  }

  /// Objective value; +inf where it is undefined (collapsed bond, inverted triangle).
  double value(const Vector& x) const {
    const Vector y = expand(x);
    double e = 0.0;
    for (std::size_t k = 0; k < sys_.bonds.size(); ++k) {
      const Bond& bond = sys_.bonds[k];
      const double r = separation(y, static_cast<int>(k));
      if (!(r > 1e-9 * bond.rest_length) || !std::isfinite(r)) return kInf;
      e += bond_energy(inter_.pair(bond.kind), inter_.transition(bond.kind), state_.memory[k], r);
    }
    try {
      e += three_body_energy(sys_, inter_, state_, y);
    } catch (const Error&) {
      return kInf;
    }
    e += dissipation_value(diss_, sys_, y, y_prev_, tau_);
    if (barrier_on_) e += orientation_barrier(sys_, y, settings_.barrier_weight);
    return std::isfinite(e) ? e : kInf;
  }

  /// Sum of the magnitudes that cancel inside value(); sets the scale of its rounding error.
  double magnitude(const Vector& x) const {
    const Vector y = expand(x);
    double m = dissipation_value(diss_, sys_, y, y_prev_, tau_);
    for (std::size_t k = 0; k < sys_.bonds.size(); ++k) {
      const PairPotential& p = pot(static_cast<int>(k));
      const double inv6 = std::pow(p.rest_length / separation(y, static_cast<int>(k)), 6);
      m += p.strength * (inv6 * inv6 + 2.0 * inv6);
    }
    if (inter_.three_body) m += std::abs(three_body_energy(sys_, inter_, state_, y));
    return std::isfinite(m) ? m : kInf;
  }

  std::vector<Piece> pieces(const Vector& y, const std::vector<ActiveKink>& active,
                            const std::vector<Piece>& hint) const {
    std::vector<Piece> out(sys_.bonds.size(), Piece::full);
    for (std::size_t k = 0; k < sys_.bonds.size(); ++k) {
      if (damage_[k] == 0.0) continue;
      const double w = pair_value(pot(static_cast<int>(k)), separation(y, static_cast<int>(k)));
      switch (classify_branch(w, w_memory_[k], settings_.tie_tol)) {
        case Branch::full: out[k] = Piece::full; break;
        case Branch::soft: out[k] = Piece::soft; break;
        case Branch::tie: out[k] = hint[k]; break;
      }
    }
    for (const auto& a : active) out[a.bond] = Piece::soft;
    return out;
  }

  double coefficient(int bond, Piece piece) const { return piece == Piece::full ? 1.0 : 1.0 - damage_[bond]; }

  Vector gradient(const Vector& y, const std::vector<Piece>& pieces) const {
    Vector all = dissipation_gradient(diss_, sys_, y, y_prev_, tau_);
    for (std::size_t k = 0; k < sys_.bonds.size(); ++k) {
      const Bond& bond = sys_.bonds[k];
      const double c = coefficient(static_cast<int>(k), pieces[k]);
      if (c == 0.0) continue;
      const Vector diff = y.segment(bond.a * n_, n_) - y.segment(bond.b * n_, n_);
      const double r = diff.norm();
      const Vector f = c * pair_derivative(inter_.pair(bond.kind), r) * diff / r;
      all.segment(bond.a * n_, n_) += f;
      all.segment(bond.b * n_, n_) -= f;
    }
    add_three_body_gradient(sys_, inter_, state_, y, all);
    if (barrier_on_) {
      for (const Triangle& t : sys_.triangles) {
        const auto g = barrier_local_gradient(triangle_coords(y, t), settings_.barrier_weight);
        const AtomId ids[3] = {t.a, t.b, t.c};
        for (int v = 0; v < 3; ++v) all.segment(2 * ids[v], 2) += g.segment(2 * v, 2);
      }
    }
    return restrict_to_free(sys_, all);
  }

  /// Gradient of the separation of `bond` with respect to the free slots.
  Vector separation_gradient(const Vector& y, int bond) const {
    const Bond& b = sys_.bonds[bond];
    const Vector diff = y.segment(b.a * n_, n_) - y.segment(b.b * n_, n_);
    const Vector z = diff / diff.norm();
    Vector row = Vector::Zero(dim());
    const auto& slot = sys_.free_slot();
    if (slot[b.a] >= 0) row.segment(slot[b.a] * n_, n_) += z;
    if (slot[b.b] >= 0) row.segment(slot[b.b] * n_, n_) -= z;
    return row;
  }

  Matrix hessian(const Vector& y, const std::vector<Piece>& pieces, const std::vector<ActiveKink>& active,
                 const Vector& multipliers) const {
    const int m = dim();
    Matrix h = Matrix::Zero(m, m);
    const Matrix eye = Matrix::Identity(n_, n_);

    for (std::size_t k = 0; k < sys_.bonds.size(); ++k) {
      const double c = coefficient(static_cast<int>(k), pieces[k]);
      if (c == 0.0) continue;
      const Bond& bond = sys_.bonds[k];
      const PairPotential& p = inter_.pair(bond.kind);
      const Vector diff = y.segment(bond.a * n_, n_) - y.segment(bond.b * n_, n_);
      const double r = diff.norm();
      const Vector z = diff / r;
      const Matrix zz = z * z.transpose();
      const Matrix block = c * (pair_second_derivative(p, r) * zz + pair_derivative(p, r) / r * (eye - zz));
      add_pair_block(h, bond.a, bond.b, block);
    }
    for (std::size_t i = 0; i < active.size(); ++i) {
      const Bond& bond = sys_.bonds[active[i].bond];
      const Vector diff = y.segment(bond.a * n_, n_) - y.segment(bond.b * n_, n_);
      const double r = diff.norm();
      const Vector z = diff / r;
      add_pair_block(h, bond.a, bond.b, multipliers[i] * (eye - z * z.transpose()) / r);
    }

    if (diss_.kind == DissipationKind::l2) {
      h.diagonal().array() += diss_.viscosity / tau_;
    } else {
      const double s = diss_.viscosity / (tau_ * sys_.spacing * sys_.spacing);
      for (const Bond& bond : sys_.bonds) {
        if (bond.kind == BondKind::nearest) add_pair_block(h, bond.a, bond.b, s * eye);
      }
    }

    const double step = 1e-6 * sys_.spacing;
    if (inter_.three_body && !sys_.triples.empty()) {
      const TriplePotential& tp = *inter_.three_body;
      for (const Triple& t : sys_.triples) {
        const double weight = triple_weight<double>(sys_, inter_, state_, t);
        if (weight == 0.0) continue;
        const double rest = tp.rest_angle_for(t.reference_angle);
        Vector p(3 * n_);
        const AtomId ids[3] = {t.outer1, t.center, t.outer2};
        for (int v = 0; v < 3; ++v) p.segment(v * n_, n_) = y.segment(ids[v] * n_, n_);
        const Matrix local = local_hessian(p, step, [&](const Vector& q) {
          return triple_local_gradient(q, n_, tp, rest, weight);
        });
        add_local_block(h, ids, 3, local);
      }
    }
    if (barrier_on_) {
      for (const Triangle& t : sys_.triangles) {
        const Vector p = triangle_coords(y, t);
        const Matrix local = local_hessian(p, step, [&](const Vector& q) -> Vector {
          return barrier_local_gradient(q, settings_.barrier_weight);
        });
        const AtomId ids[3] = {t.a, t.b, t.c};
        add_local_block(h, ids, 3, local);
      }
    }
    return h;
  }

  /// Radius below the rest length where W(r) = W(M); the compressive kink of a damaged bond.
  double kink_low(int bond) const {
    if (kink_low_[bond] > 0.0) return kink_low_[bond];
    const PairPotential& p = pot(bond);
    const double target = w_memory_[bond];
    double lo = 0.5 * p.rest_length;
    while (pair_value(p, lo) <= target) lo *= 0.5;
    double hi = p.rest_length;
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid == lo || mid == hi) break;
      (pair_value(p, mid) > target ? lo : hi) = mid;
    }
    kink_low_[bond] = 0.5 * (lo + hi);
    return kink_low_[bond];
  }

  /// Kink radius the bond currently sits closest to.
  double nearest_kink(const Vector& y, int bond) const {
    const double r = separation(y, bond);
    const double m = state_.memory[bond];
    return std::abs(r - m) <= std::abs(r - kink_low(bond)) ? m : kink_low(bond);
  }

  /// First step length in (0, limit) at which a damaged, non-active bond reaches a kink.
  double first_breakpoint(const Vector& y, const Vector& dx, const std::vector<ActiveKink>& active, double limit,
                          int* bond_out, double* radius_out) const {
    const Vector dy = expand_direction(dx);
    double best = kInf;
    std::vector<char> is_active(sys_.bonds.size(), 0);
    for (const auto& a : active) is_active[a.bond] = 1;
    for (std::size_t k = 0; k < sys_.bonds.size(); ++k) {
      if (damage_[k] == 0.0 || is_active[k]) continue;
      const Bond& bond = sys_.bonds[k];
      const Vector u = y.segment(bond.a * n_, n_) - y.segment(bond.b * n_, n_);
      const Vector w = dy.segment(bond.a * n_, n_) - dy.segment(bond.b * n_, n_);
      const double a = w.squaredNorm();
      if (a == 0.0) continue;
      const double b = u.dot(w);
      const double w_now = pair_value(inter_.pair(bond.kind), u.norm());
      for (double rho : {state_.memory[k], kink_low(static_cast<int>(k))}) {
        // a kink the bond already sits on: its side was decided with the tied set
        if (classify_branch(w_now, w_memory_[k], settings_.tie_tol) == Branch::tie &&
            std::abs(u.norm() - rho) < 0.5 * (state_.memory[k] - kink_low(static_cast<int>(k)))) {
          continue;
        }
        const double c = u.squaredNorm() - rho * rho;
        const double disc = b * b - a * c;
        if (disc < 0.0) continue;
        const double sq = std::sqrt(disc);
        for (double alpha : {(-b - sq) / a, (-b + sq) / a}) {
          if (alpha > 1e-12 && alpha < limit && alpha < best) {
            best = alpha;
            *bond_out = static_cast<int>(k);
            *radius_out = rho;
          }
        }
      }
    }
    return best;
  }

  Vector expand_direction(const Vector& dx) const {
    Vector dy = Vector::Zero(base_.size());
    scatter_free(sys_, dx, dy);
    return dy;
  }

 private:
  Vector triangle_coords(const Vector& y, const Triangle& t) const {
    Vector p(6);
    p << y[2 * t.a], y[2 * t.a + 1], y[2 * t.b], y[2 * t.b + 1], y[2 * t.c], y[2 * t.c + 1];
    return p;
  }

  void add_pair_block(Matrix& h, AtomId a, AtomId b, const Matrix& block) const {
    const auto& slot = sys_.free_slot();
    const int sa = slot[a], sb = slot[b];
    if (sa >= 0) h.block(sa * n_, sa * n_, n_, n_) += block;
    if (sb >= 0) h.block(sb * n_, sb * n_, n_, n_) += block;
    if (sa >= 0 && sb >= 0) {
      h.block(sa * n_, sb * n_, n_, n_) -= block;
      h.block(sb * n_, sa * n_, n_, n_) -= block;
    }
  }

  void add_local_block(Matrix& h, const AtomId* ids, int count, const Matrix& local) const {
    const auto& slot = sys_.free_slot();
    for (int p = 0; p < count; ++p) {
      if (slot[ids[p]] < 0) continue;
      for (int q = 0; q < count; ++q) {
        if (slot[ids[q]] < 0) continue;
        h.block(slot[ids[p]] * n_, slot[ids[q]] * n_, n_, n_) += local.block(p * n_, q * n_, n_, n_);
      }
    }
  }

  const LatticeSystem& sys_;
  const Interactions& inter_;
  const DamageState& state_;
  const Vector& y_prev_;
  double tau_;
  Dissipation diss_;
  SolverSettings settings_;
  int n_;
  Vector base_;
  std::vector<double> damage_;
  std::vector<double> w_memory_;
  mutable std::vector<double> kink_low_;
  bool barrier_on_ = false;
};

/// Solves (H + shift I) d = rhs with the smallest shift that makes the matrix positive definite.
// Cholesky factor of h, shifted towards the identity until it exists.
Eigen::LLT<Matrix> convexified_llt(const Matrix& h) {
  Eigen::LLT<Matrix> llt(h);
  if (llt.info() == Eigen::Success || h.rows() == 0) return llt;
  const double scale = 1.0 + h.diagonal().cwiseAbs().maxCoeff();
  for (double shift = 1e-8 * scale;; shift *= 10.0) {
    llt.compute(h + shift * Matrix::Identity(h.rows(), h.cols()));
    if (llt.info() == Eigen::Success) return llt;
  }
}

// min 1/2 s'Qs + c's over [0, 1]^m, Q positive semidefinite. Active set on the box: solve on the
// free coordinates, walk towards that point until a bound blocks, repeat.
Vector solve_unit_box_qp(const Matrix& q, const Vector& c) {
  const Eigen::Index m = c.size();
  Vector s = Vector::Zero(m);
  const double ridge = 1e-13 * (1.0 + q.diagonal().cwiseAbs().maxCoeff());
  std::vector<char> at_bound(m, 1);
  for (int outer = 0; outer < 20 * static_cast<int>(m) + 20; ++outer) {
    const Vector grad = q * s + c;
    bool released = false;
    double worst = 1e-14 * (1.0 + c.cwiseAbs().maxCoeff());
    Eigen::Index pick = -1;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (!at_bound[i]) continue;
      const double push = s[i] == 0.0 ? -grad[i] : grad[i];  // > 0: wants to move inward
      if (push > worst) {
        worst = push;
        pick = i;
      }
    }
    if (pick >= 0) {
      at_bound[pick] = 0;
      released = true;
    }
    // inner loop: minimise over the free coordinates, bounded by the box
    for (int inner = 0; inner <= m; ++inner) {
      std::vector<Eigen::Index> free;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (!at_bound[i]) free.push_back(i);
      }
      if (free.empty()) break;
      const Eigen::Index nf = static_cast<Eigen::Index>(free.size());
      Matrix qf(nf, nf);
      Vector rhs(nf);
      for (Eigen::Index i = 0; i < nf; ++i) {
        rhs[i] = -c[free[i]];
        for (Eigen::Index j = 0; j < m; ++j) {
          if (at_bound[j]) rhs[i] -= q(free[i], j) * s[j];
        }
        for (Eigen::Index j = 0; j < nf; ++j) qf(i, j) = q(free[i], free[j]);
      }
      qf.diagonal().array() += ridge;
      const Vector target = qf.ldlt().solve(rhs);
      double t = 1.0;
      Eigen::Index blocking = -1;
      for (Eigen::Index i = 0; i < nf; ++i) {
        const double from = s[free[i]];
        const double to = target[i];
        double limit = 1.0;
        if (to < 0.0) limit = from / (from - to);
        if (to > 1.0) limit = (1.0 - from) / (to - from);
        if (limit < t) {
          t = limit;
          blocking = i;
        }
      }
      for (Eigen::Index i = 0; i < nf; ++i) s[free[i]] += t * (target[i] - s[free[i]]);
      if (blocking < 0) break;
      const Eigen::Index b = free[blocking];
      s[b] = target[blocking] < 0.0 ? 0.0 : 1.0;
      at_bound[b] = 1;
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      if (at_bound[i]) s[i] = s[i] < 0.5 ? 0.0 : 1.0;
    }
    if (!released) break;
  }
  return s;
}

bool constraints_independent(const Matrix& a) {
  if (a.rows() > a.cols()) return false;
  Eigen::ColPivHouseholderQR<Matrix> qr(a.transpose());
  qr.setThreshold(1e-10);
  return qr.rank() == a.rows();
}

}  // namespace

double SolverSettings::resolved_grad_tol(const LatticeSystem& sys) const {
  return grad_tol > 0.0 ? grad_tol : 1e-8 * std::sqrt(static_cast<double>(std::max(1, sys.free_count())));
}

double dissipation_value(const Dissipation& d, const LatticeSystem& sys, const Vector& y, const Vector& y_prev,
                         double tau) {
  if (!(tau > 0.0)) throw DomainError("time step must be positive");
  if (d.kind == DissipationKind::l2) return d.viscosity / (2.0 * tau) * (y - y_prev).squaredNorm();
  const int n = sys.ambient_dim;
  const double eps2 = sys.spacing * sys.spacing;
  double sum = 0.0;
  for (const Bond& bond : sys.bonds) {
    if (bond.kind != BondKind::nearest) continue;
    sum += ((y.segment(bond.a * n, n) - y.segment(bond.b * n, n)) -
            (y_prev.segment(bond.a * n, n) - y_prev.segment(bond.b * n, n)))
               .squaredNorm() / eps2;
  }
  return d.viscosity / (2.0 * tau) * sum;
}

Vector dissipation_gradient(const Dissipation& d, const LatticeSystem& sys, const Vector& y, const Vector& y_prev,
                            double tau) {
  if (!(tau > 0.0)) throw DomainError("time step must be positive");
  if (d.kind == DissipationKind::l2) return d.viscosity / tau * (y - y_prev);
  const int n = sys.ambient_dim;
  const double s = d.viscosity / (tau * sys.spacing * sys.spacing);
  Vector g = Vector::Zero(y.size());
  for (const Bond& bond : sys.bonds) {
    if (bond.kind != BondKind::nearest) continue;
    const Vector rate = (y.segment(bond.a * n, n) - y.segment(bond.b * n, n)) -
                        (y_prev.segment(bond.a * n, n) - y_prev.segment(bond.b * n, n));
    g.segment(bond.a * n, n) += s * rate;
    g.segment(bond.b * n, n) -= s * rate;
  }
  return g;
}

Vector warm_start(const LatticeSystem& sys, const Vector& y_prev, const Vector& g_now) {
  if (y_prev.size() != sys.positions.size() || g_now.size() != sys.positions.size()) {
    throw ConfigurationError("deformation size does not match the lattice");
  }
  const int n = sys.ambient_dim;
  Vector y = y_prev;
  for (AtomId i : sys.dirichlet) y.segment(i * n, n) = g_now.segment(i * n, n);
  return y;
}

double orientation_barrier(const LatticeSystem& sys, const Vector& y, double weight) {
  if (sys.ambient_dim != 2) return 0.0;
  double sum = 0.0;
  for (const Triangle& t : sys.triangles) {
    const double det = triangle_det(y, t);
    if (!(det > 0.0)) return kInf;
    sum -= weight * std::log(det);
  }
  return sum;
}

double inclusion_residual(const LatticeSystem& sys, const Interactions& inter, const DamageState& state,
                          const Vector& y, const Vector& y_prev, double tau, const Dissipation& d, double tie_tol,
                          double barrier_weight) {
  const int n = sys.ambient_dim;
  Vector all = dissipation_gradient(d, sys, y, y_prev, tau);
  all += min_norm_gradient_all_slots(sys, inter, state, y, tie_tol);
  if (barrier_weight > 0.0 && n == 2) {
    for (const Triangle& t : sys.triangles) {
      Eigen::Matrix<double, 6, 1> p;
      p << y[2 * t.a], y[2 * t.a + 1], y[2 * t.b], y[2 * t.b + 1], y[2 * t.c], y[2 * t.c + 1];
      const auto g = barrier_local_gradient(p, barrier_weight);
      const AtomId ids[3] = {t.a, t.b, t.c};
      for (int v = 0; v < 3; ++v) all.segment(2 * ids[v], 2) += g.segment(2 * v, 2);
    }
  }
  Vector residual = restrict_to_free(sys, all);

  // Tie bonds: the min-norm factor 1 - phi may be raised by t in [0, phi].
  struct Direction {
    Vector v;
    double upper;
    double sq;
  };
  std::vector<Direction> ties;
  for (std::size_t k = 0; k < sys.bonds.size(); ++k) {
    const Bond& bond = sys.bonds[k];
    const PairPotential& p = inter.pair(bond.kind);
    const double damage = evaluate_phi(inter.transition(bond.kind), state.memory[k]);
    if (damage == 0.0) continue;
    const double r = bond_separation(sys, bond, y);
    if (classify_branch(pair_value(p, r), pair_value(p, state.memory[k]), tie_tol) != Branch::tie) continue;
    Vector full = Vector::Zero(y.size());
    const Vector z = (y.segment(bond.a * n, n) - y.segment(bond.b * n, n)) / r;
    full.segment(bond.a * n, n) += pair_derivative(p, r) * z;
    full.segment(bond.b * n, n) -= pair_derivative(p, r) * z;
    Vector v = restrict_to_free(sys, full);
    const double sq = v.squaredNorm();
    if (sq > 0.0) ties.push_back({std::move(v), damage, sq});
  }
  if (ties.empty()) return residual.norm();

  // Box-constrained least squares by cyclic coordinate descent (convex, few variables).
  std::vector<double> t(ties.size(), 0.0);
  for (int sweep = 0; sweep < 10000; ++sweep) {
    double change = 0.0;
    for (std::size_t i = 0; i < ties.size(); ++i) {
      const double target = std::clamp(t[i] - ties[i].v.dot(residual) / ties[i].sq, 0.0, ties[i].upper);
      const double delta = target - t[i];
      if (delta != 0.0) {
        residual += delta * ties[i].v;
        t[i] = target;
        change = std::max(change, std::abs(delta) * std::sqrt(ties[i].sq));
      }
    }
    if (change <= 1e-17 * (1.0 + residual.norm())) break;
  }
  return residual.norm();
}

StepResult solve_step(const StepProblem& problem, const SolverSettings& settings) {
  const LatticeSystem& sys = problem.sys;
  if (!(problem.tau > 0.0)) throw DomainError("time step must be positive");
  if (!(problem.dissipation.viscosity > 0.0)) throw ConfigurationError("viscosity must be positive");
  if (problem.state.memory.size() != static_cast<Eigen::Index>(sys.bonds.size())) {
    throw ConfigurationError("damage state does not match the bond list");
  }
  if (!problem.g_now.allFinite()) throw DomainError("boundary values must be finite");

  StepObjective obj(problem, settings);
  const double tol = settings.resolved_grad_tol(sys);
  const int dim = obj.dim();
  const std::size_t nb = sys.bonds.size();

  Vector x = restrict_to_free(sys, obj.base());
  double f = obj.value(x);
  if (!std::isfinite(f)) throw NumericalError("warm start is not admissible (collapsed bond)");

  StepResult result;
  result.warm_start_objective = f;
  const double barrier_weight =
      settings.orientation_guard == OrientationGuard::barrier ? settings.barrier_weight : 0.0;

  auto finish = [&](const Vector& xs, double fs, int iters, bool ok) {
    result.y_next = obj.expand(xs);
    result.objective = fs;
    result.iterations = iters;
    result.converged = ok;
    result.residual_norm = inclusion_residual(sys, problem.inter, problem.state, result.y_next, problem.y_prev,
                                              problem.tau, problem.dissipation, settings.tie_tol,
                                              barrier_weight);
    result.tie_bonds_at_solution.clear();
    for (std::size_t k = 0; k < nb; ++k) {
      const PairPotential& p = obj.pot(static_cast<int>(k));
      const double r = obj.separation(result.y_next, static_cast<int>(k));
      if (classify_branch(pair_value(p, r), obj.w_memory(static_cast<int>(k)), settings.tie_tol) == Branch::tie) {
        result.tie_bonds_at_solution.push_back(static_cast<int>(k));
      }
    }
  };

  if (dim == 0) {
    finish(x, f, 0, true);
    return result;
  }

  std::vector<ActiveKink> active;
  std::vector<Piece> hint(nb, Piece::soft);
  const double roundoff = 64.0 * std::numeric_limits<double>::epsilon();
  int noise_steps = 0;
  int snaps = 0;

  auto constraint_matrix = [&](const Vector& y, Matrix& a, Vector& h) {
    a.resize(static_cast<Eigen::Index>(active.size()), dim);
    h.resize(static_cast<Eigen::Index>(active.size()));
    for (std::size_t i = 0; i < active.size(); ++i) {
      a.row(i) = obj.separation_gradient(y, active[i].bond).transpose();
      h[i] = obj.separation(y, active[i].bond) - active[i].radius;
    }
  };

  // Gauss-Newton return onto the held kinks; linear steps drift off them quadratically.
  auto project = [&](Vector xp) {
    if (active.empty()) return xp;
    Matrix a;
    Vector h;
    for (int it = 0; it < 8; ++it) {
      const Vector yp = obj.expand(xp);
      constraint_matrix(yp, a, h);
      if (h.cwiseAbs().maxCoeff() <= 4.0 * std::numeric_limits<double>::epsilon() * sys.spacing) break;
      xp -= a.transpose() * (a * a.transpose()).ldlt().solve(h);
    }
    return xp;
  };

  // Every kink is convex: the slope in r jumps from (1 - phi) W' to W' across it. Near the tied
  // bonds the local model is a QP with hinges phi W' max(0, dr), and its dual is a box QP in the
  // factors s in [0, 1]. s = 0 keeps a bond on the soft piece, s = 1 moves it onto the full
  // piece, anything in between holds it on the kink.
  std::vector<char> pinned(nb, 0);
  // Primal direction of the box QP: descent for the kinked objective, since each bond's hinge
  // term has the sign its factor asks for. Used when the piecewise-smooth directions stall.
  Vector tie_dir;
  double tie_slope = 0.0;
  auto split_ties = [&](const Vector& y) {
    tie_dir.resize(0);
    std::vector<int> tied;
    std::vector<Piece> soft_hint = hint;
    for (std::size_t b = 0; b < nb; ++b) {
      const int bi = static_cast<int>(b);
      if (obj.damage(bi) == 0.0 || pinned[b]) continue;
      const double w = pair_value(obj.pot(bi), obj.separation(y, bi));
      if (classify_branch(w, obj.w_memory(bi), settings.tie_tol) != Branch::tie) continue;
      tied.push_back(bi);
      soft_hint[b] = Piece::soft;
    }
    active.erase(std::remove_if(active.begin(), active.end(),
                                [&](const ActiveKink& a) { return !pinned[a.bond]; }),
                 active.end());
    if (tied.empty()) return;

    const std::vector<Piece> pieces = obj.pieces(y, active, soft_hint);
    const Vector g = obj.gradient(y, pieces);
    const Eigen::LLT<Matrix> llt = convexified_llt(obj.hessian(y, pieces, {}, Vector()));
    const Eigen::Index m = static_cast<Eigen::Index>(tied.size());
    Matrix hinge(dim, m);
    for (Eigen::Index j = 0; j < m; ++j) {
      const int b = tied[j];
      hinge.col(j) = obj.damage(b) * pair_derivative(obj.pot(b), obj.separation(y, b)) * obj.separation_gradient(y, b);
    }
    const Matrix c = llt.matrixL().solve(hinge);
    const Vector c0 = llt.matrixL().solve(g);
    const Vector factor = solve_unit_box_qp(c.transpose() * c, c.transpose() * c0);
    const Vector model_g = g + hinge * factor;
    tie_dir = -llt.solve(model_g);
    tie_slope = model_g.dot(tie_dir);

    for (Eigen::Index j = 0; j < m; ++j) {
      const int b = tied[j];
      if (factor[j] <= 1e-9) {
        hint[b] = Piece::soft;
      } else if (factor[j] >= 1.0 - 1e-9) {
        hint[b] = Piece::full;
      } else {
        active.push_back({b, obj.nearest_kink(y, b)});
        Matrix a;
        Vector h;
        constraint_matrix(y, a, h);
        if (!constraints_independent(a)) {
          active.pop_back();
          hint[b] = factor[j] < 0.5 ? Piece::soft : Piece::full;
        }
      }
    }
  };

  int iter = 0;
  bool converged = false;
  for (; iter < settings.max_iters; ++iter) {
    split_ties(obj.expand(x));
    if (!active.empty()) {
      x = project(x);
      f = obj.value(x);
    }
    const Vector y = obj.expand(x);
    const std::vector<Piece> pieces = obj.pieces(y, active, hint);
    const Vector g = obj.gradient(y, pieces);
    const Eigen::Index k = static_cast<Eigen::Index>(active.size());

    Matrix a, basis_y, basis_z, r_factor;
    Vector h, mu;
    Vector reduced_g;
    if (k == 0) {
      reduced_g = g;
    } else {
      constraint_matrix(y, a, h);
      Eigen::HouseholderQR<Matrix> qr(a.transpose());
      const Matrix q = qr.householderQ();
      basis_y = q.leftCols(k);
      basis_z = q.rightCols(dim - k);
      r_factor = qr.matrixQR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
      mu = r_factor.triangularView<Eigen::Upper>().solve(-(basis_y.transpose() * g));
      reduced_g = basis_z.transpose() * g;
    }
    const double stationarity = reduced_g.norm();

    if (stationarity <= tol) {
      // Multiplier of a kink must correspond to a factor in [1 - phi, 1].
      int worst = -1;
      double worst_violation = 1e-9;
      Piece release_to = Piece::soft;
      for (Eigen::Index i = 0; i < k; ++i) {
        const int bond = active[i].bond;
        const double r = obj.separation(y, bond);
        const double s = mu[i] / (obj.damage(bond) * pair_derivative(obj.pot(bond), r));
        const double violation = s < 0.0 ? -s : s - 1.0;
        if (violation > worst_violation) {
          worst_violation = violation;
          worst = static_cast<int>(i);
          release_to = s < 0.0 ? Piece::soft : Piece::full;
        }
      }
      if (worst < 0) {
        const double residual = inclusion_residual(sys, problem.inter, problem.state, y, problem.y_prev, problem.tau,
                                                   problem.dissipation, settings.tie_tol, barrier_weight);
        if (residual <= tol) {
          converged = true;
          break;
        }
      } else {
        // the box QP and the multipliers disagree (convexified curvature); trust the multiplier
        // until the iterate moves
        const int bond = active[worst].bond;
        hint[bond] = release_to;
        pinned[bond] = 1;
        active.erase(active.begin() + worst);
        continue;
      }
    }

    Matrix hess = obj.hessian(y, pieces, active, mu);
    Vector dx;
    double slope = 0.0;
    if (k == 0) {
      dx = convexified_llt(hess).solve(-g);
      slope = g.dot(dx);
    } else {
      const Vector py = r_factor.transpose().triangularView<Eigen::Lower>().solve(-h);
      const Vector dy = basis_y * py;
      const Matrix reduced_h = basis_z.transpose() * hess * basis_z;
      const Vector rhs = -(basis_z.transpose() * (g + hess * dy));
      const Vector pz = convexified_llt(reduced_h).solve(rhs);
      dx = dy + basis_z * pz;
      slope = reduced_g.dot(pz);  // the restoring part dy is handled by project()
    }
    if (!(slope < 0.0) && stationarity > 0.0) {
      dx = k == 0 ? Vector(-g) : Vector(-(basis_z * reduced_g));
      slope = -stationarity * stationarity;
    }

    // Backtracking along dx; a kink crossed before the accepted step is landed on exactly, and
    // the next box QP decides which side the bond goes.
    const double f_scale = obj.magnitude(x);
    int blocking_bond = -1;
    double blocking_radius = 0.0;
    auto line_search = [&](const Vector& dir, double dir_slope, Vector& x_out, double& f_out) {
      int kink_bond = -1;
      double kink_radius = 0.0;
      const double kink_alpha = obj.first_breakpoint(y, dir, active, 1.0, &kink_bond, &kink_radius);
      if (blocking_bond < 0) {
        blocking_bond = kink_bond;
        blocking_radius = kink_radius;
      }
      bool kink_checked = false;
      double alpha = 1.0;
      for (int ls = 0; ls < 80; ++ls) {
        const Vector xt = project(x + alpha * dir);
        const double ft = obj.value(xt);
        // strict decrease: once c1 * alpha * slope drops below the spacing of doubles near f,
        // the Armijo test alone would accept null steps. A full step within roundoff is taken when
        // f can no longer resolve the predicted decrease (stiff, compressed bonds) or we are close.
        const double noise = roundoff * (1.0 + f_scale);
        if (ft < f && ft <= f + settings.ls_c1 * alpha * dir_slope) {
          noise_steps = 0;
          x_out = xt;
          f_out = ft;
          return true;
        }
        // capped, otherwise iterates at the resolution floor of y wander until max_iters
        if (alpha == 1.0 && std::isfinite(ft) && ft <= f + noise && noise_steps < 20 &&
            (stationarity <= 1e3 * tol || -dir_slope <= noise)) {
          ++noise_steps;
          x_out = xt;
          f_out = ft;
          return true;
        }
        if (!kink_checked && kink_alpha < alpha) {
          kink_checked = true;
          const Vector xb = project(x + kink_alpha * dir);
          const double fb = obj.value(xb);
          if (fb < f && fb <= f + settings.ls_c1 * kink_alpha * dir_slope) {
            x_out = xb;
            f_out = fb;
            return true;
          }
        }
        alpha *= settings.ls_shrink;
      }
      return false;
    };

    Vector x_next;
    double f_next = f;
    bool moved = line_search(dx, slope, x_next, f_next);
    if (!moved && tie_dir.size() == dim && tie_slope < 0.0) moved = line_search(tie_dir, tie_slope, x_next, f_next);
    if (!moved && stationarity > 0.0) {
      const Vector steepest = k == 0 ? Vector(-g) : Vector(-(basis_z * reduced_g));
      moved = line_search(steepest, -stationarity * stationarity, x_next, f_next);
    }
    if (!moved) {
      // A bond just off its kink (outside tie_tol) blocks every direction: the slope flips right
      // after the breakpoint. Put it on the kink and let the next partition decide its side.
      const bool held = std::any_of(active.begin(), active.end(),
                                    [&](const ActiveKink& a) { return a.bond == blocking_bond; });
      if (blocking_bond < 0 || held || ++snaps > static_cast<int>(nb)) break;
      active.push_back({blocking_bond, blocking_radius});
      Matrix a;
      Vector h;
      constraint_matrix(y, a, h);
      if (!constraints_independent(a)) {
        active.pop_back();
        break;
      }
      pinned[blocking_bond] = 1;
      x = project(x);
      f = obj.value(x);
      continue;
    }
    snaps = 0;
    std::fill(pinned.begin(), pinned.end(), 0);
    x = x_next;
    f = f_next;
  }

  finish(x, f, iter, converged);
  if (!converged) {
    throw NonConvergenceError("incremental step did not reach the gradient tolerance (residual " +
                                  std::to_string(result.residual_norm) + ")",
                              result);
  }
  return result;
}

}  // namespace atomfrac
