#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace atomfrac {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A lattice, scenario or trace is inconsistent with what an operation needs.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// An argument lies outside the domain of a function (r <= 0, theta outside [0, pi], ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or coinciding atoms encountered during evaluation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace atomfrac
