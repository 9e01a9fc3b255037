// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace quantlaw {

// Error taxonomy shared by every module. The CLI maps these onto process
// exit codes: usage 2, input 3, infeasible 4, numeric 5.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad runtime data: non-finite values, out-of-range tokens, length mismatches.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Malformed or out-of-range numeric format descriptor.
class InvalidFormat : public Error {
 public:
  using Error::Error;
};

// Model configuration violates a structural constraint.
class InvalidConfig : public Error {
 public:
  using Error::Error;
};

// Checkpoint file is unreadable: bad magic, bad version, truncation,
// or payload digest mismatch.
class CorruptCheckpoint : public Error {
 public:
  using Error::Error;
};

// Well-formed container whose contents disagree with the expected schema
// (tensor inventory mismatch, unsupported log schema version).
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Malformed record in a structured input; for line-oriented logs carries
// the 1-based line number (0 = not line-addressable).
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& msg, long line = 0)
      : Error(line > 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
        line_number(line) {}
  long line_number = 0;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// No site subset reaches the requested ratio within tolerance.
class RatioInfeasible : public Error {
 public:
  RatioInfeasible(const std::string& msg, double closest)
      : Error(msg), closest_achievable(closest) {}
  double closest_achievable = 0.0;
};

// More than the tolerated fraction of search trials failed.
class RunFailed : public Error {
 public:
  using Error::Error;
};

class EmptyRun : public Error {
 public:
  using Error::Error;
};

// Fit design matrix is rank deficient or has too few points.
class Underdetermined : public Error {
 public:
  using Error::Error;
};

// Every observation was nonpositive, leaving nothing to fit in log space.
class NoFittableData : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

// Incompatible runs grouped under one contour key.
class ConflictError : public Error {
 public:
  using Error::Error;
};

}  // namespace quantlaw
