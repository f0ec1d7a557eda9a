#pragma once

#include <stdexcept>
#include <string>

namespace sqfield {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Grid too coarse for the band limit of the requested field.
class NyquistViolation : public Error {
 public:
  using Error::Error;
};

/// Hermite / Wick order outside the configured range.
class OrderOverflow : public Error {
 public:
  using Error::Error;
};

/// Exponent of a Wick exponential or trigonometric factor leaves the double range.
class Overflow : public Error {
 public:
  using Error::Error;
};

class QuadratureFailure : public Error {
 public:
  using Error::Error;
};

/// Image sum evaluated on the lattice 2*pi*Z^2 where the kernel is singular.
class SingularPoint : public Error {
 public:
  using Error::Error;
};

class BlowupDetected : public Error {
 public:
  using Error::Error;
};

/// Importance weights collapsed onto too few samples.
class DegenerateWeights : public Error {
 public:
  using Error::Error;
};

class ParameterOutOfRange : public Error {
 public:
  using Error::Error;
};

}  // namespace sqfield
