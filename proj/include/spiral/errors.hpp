#pragma once

#include <stdexcept>
#include <string>

namespace spiral {

/// Base class for every numerical failure raised by the library.
class SpiralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An exponential needed by the model is not representable in double.
class RangeError : public SpiralError {
 public:
  using SpiralError::SpiralError;
};

/// The adaptive stepper could not make progress.
class StepSizeUnderflow : public SpiralError {
 public:
  using SpiralError::SpiralError;
};

/// A bisection was started on an interval whose ends do not straddle the root.
class NoBracket : public SpiralError {
 public:
  using SpiralError::SpiralError;
};

/// Backward crossings of the separatrix fell into floating-point noise.
class FocusStall : public SpiralError {
 public:
  using SpiralError::SpiralError;
};

/// A branch lookup was requested outside the arc's l-span.
class OutOfRange : public SpiralError {
 public:
  using SpiralError::SpiralError;
};

/// A profile does not reach deep enough into the tail for the requested diagnostic.
class TailTooShort : public SpiralError {
 public:
  using SpiralError::SpiralError;
};

}  // namespace spiral
