#pragma once

#include <stdexcept>
#include <string>

namespace oto {

// Base for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Precondition or argument-domain violation.
class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& msg) : Error(msg) {}
};

// Iterative solver exceeded its iteration cap (or stalled) before reaching
// the requested residual; signals an under-constrained / near-singular system.
class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& msg, long long iterations, double residual)
      : Error(msg), iterations(iterations), residual(residual) {}
  long long iterations;
  double residual;
};

// Optimality-criteria bisection could not bracket the Lagrange multiplier
// (degenerate sensitivities) or could not reach the volume tolerance.
class BisectionFailure : public Error {
 public:
  explicit BisectionFailure(const std::string& msg) : Error(msg) {}
};

// Problem generator failed validation for too many consecutive candidates.
class GenerationStall : public Error {
 public:
  explicit GenerationStall(const std::string& msg) : Error(msg) {}
};

// A feature placement produced an empty node set even after bounded retries.
class DegenerateFeature : public Error {
 public:
  explicit DegenerateFeature(const std::string& msg) : Error(msg) {}
};

// Candidate topology could not be evaluated (FEA solve failed).
class CandidateUnsolvable : public Error {
 public:
  explicit CandidateUnsolvable(const std::string& msg) : Error(msg) {}
};

// break_even precondition: per-use savings must be positive.
class NonPositiveSavings : public Error {
 public:
  explicit NonPositiveSavings(const std::string& msg) : Error(msg) {}
};

// Serialization faults.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error(msg) {}
};
class MagicMismatch : public FormatError {
 public:
  explicit MagicMismatch(const std::string& msg) : FormatError(msg) {}
};
class TruncatedRecord : public FormatError {
 public:
  explicit TruncatedRecord(const std::string& msg) : FormatError(msg) {}
};
class LengthMismatch : public FormatError {
 public:
  explicit LengthMismatch(const std::string& msg) : FormatError(msg) {}
};
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace oto
