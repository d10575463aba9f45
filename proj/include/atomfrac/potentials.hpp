#pragma once

#include "atomfrac/common.hpp"

#include <cmath>
#include <numbers>
#include <optional>

namespace atomfrac {

enum class PairKind { lennard_jones_shifted };

/// Two-body potential W with its unique minimum at `rest_length`.
///
/// The Lennard-Jones family is parametrised so that
///   W(r) = strength * (s^-12 - 2 s^-6),  s = r / rest_length,
/// which is 4((eps/(2^(1/6) r))^12 - (eps/(2^(1/6) r))^6) for rest_length = eps and strength 1,
/// and eta * W(r / sqrt(3)) for a next-nearest pair with rest_length = sqrt(3) eps.
struct PairPotential {
  PairKind kind = PairKind::lennard_jones_shifted;
  double rest_length = 1.0;
  double strength = 1.0;

  static PairPotential nearest(double spacing) { return {PairKind::lennard_jones_shifted, spacing, 1.0}; }
  static PairPotential next_nearest(double spacing, double nnn_scale) {
    return {PairKind::lennard_jones_shifted, std::sqrt(3.0) * spacing, nnn_scale};
  }
};

namespace detail {
template <typename Scalar>
void require_positive_separation(Scalar r) {
  if (!(r > Scalar(0))) throw DomainError("pair potential evaluated at non-positive separation");
}
}  // namespace detail

template <typename Scalar>
Scalar pair_value(const PairPotential& p, Scalar r) {
  detail::require_positive_separation(r);
  const Scalar inv6 = std::pow(Scalar(p.rest_length) / r, 6);
  return Scalar(p.strength) * (inv6 * inv6 - Scalar(2) * inv6);
}

template <typename Scalar>
Scalar pair_derivative(const PairPotential& p, Scalar r) {
  detail::require_positive_separation(r);
  const Scalar inv6 = std::pow(Scalar(p.rest_length) / r, 6);
  return Scalar(p.strength) * Scalar(12) * (inv6 - inv6 * inv6) / r;
}

template <typename Scalar>
Scalar pair_second_derivative(const PairPotential& p, Scalar r) {
  detail::require_positive_separation(r);
  const Scalar inv6 = std::pow(Scalar(p.rest_length) / r, 6);
  return Scalar(p.strength) * (Scalar(156) * inv6 * inv6 - Scalar(84) * inv6) / (r * r);
}

enum class TripleKind { cosine_harmonic };

/// Angle potential stiffness * (cos(theta) - cos(rest_angle))^2.
/// Without an explicit rest angle each triple uses its reference angle.
struct TriplePotential {
  TripleKind kind = TripleKind::cosine_harmonic;
  double stiffness = 0.0;
  std::optional<double> rest_angle;

  double rest_angle_for(double reference_angle) const { return rest_angle.value_or(reference_angle); }
};

/// Value as a function of cos(theta); smooth on the whole closed interval [-1, 1].
template <typename Scalar>
Scalar triple_value_cos(const TriplePotential& t, Scalar cos_theta, double rest_angle) {
  const Scalar d = cos_theta - Scalar(std::cos(rest_angle));
  return Scalar(t.stiffness) * d * d;
}

/// d/d(cos theta) of triple_value_cos.
template <typename Scalar>
Scalar triple_dvalue_dcos(const TriplePotential& t, Scalar cos_theta, double rest_angle) {
  return Scalar(2 * t.stiffness) * (cos_theta - Scalar(std::cos(rest_angle)));
}

template <typename Scalar>
Scalar triple_value(const TriplePotential& t, Scalar theta, double reference_angle = std::numbers::pi / 3) {
  if (!(theta >= Scalar(0) && theta <= Scalar(std::numbers::pi))) {
    throw DomainError("angle outside [0, pi]");
  }
  return triple_value_cos(t, Scalar(std::cos(theta)), t.rest_angle_for(reference_angle));
}

}  // namespace atomfrac
