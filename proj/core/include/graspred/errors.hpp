#pragma once

#include <stdexcept>
#include <string>

namespace graspred {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input document (bad JSON, missing field, wrong arity).
class ParseError : public Error {
public:
  using Error::Error;
};

/// Structurally valid input violating a domain invariant. Messages name the
/// offending frame index / field.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Invalid configuration value (non-positive rate, bad range, ...).
class ConfigError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

class BadSpec : public Error {
public:
  using Error::Error;
};

class TooFewFrames : public Error {
public:
  using Error::Error;
};

class TrialTooShort : public Error {
public:
  using Error::Error;
};

class TooFewPoints : public Error {
public:
  using Error::Error;
};

/// Trajectory fit degenerate: no start converged or the design carries no
/// information about the parameters.
class NoFeasibleFit : public Error {
public:
  using Error::Error;
};

/// Motion onset never detected in the inspected window.
class NotMoving : public Error {
public:
  using Error::Error;
};

/// Direction undefined: palm speed below threshold or coincident points.
class DegenerateDirection : public Error {
public:
  using Error::Error;
};

class EmptyDataset : public Error {
public:
  using Error::Error;
};

class EmptyWindow : public Error {
public:
  using Error::Error;
};

class NoRecords : public Error {
public:
  using Error::Error;
};

class TooFewUsers : public Error {
public:
  using Error::Error;
};

class ShapeMismatch : public Error {
public:
  using Error::Error;
};

/// A non-finite loss, gradient or parameter surfaced during training.
/// The message names the epoch and batch.
class NonFiniteGradient : public Error {
public:
  using Error::Error;
};

class MissingArtifact : public Error {
public:
  using Error::Error;
};

}  // namespace graspred
