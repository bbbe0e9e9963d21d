// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace pgen {

// Base of every pgen error. Catch this at the CLI boundary; everything the
// toolkit throws on purpose derives from it.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

class PermissionDenied : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class WriterClosed : public Error {
 public:
  using Error::Error;
};

// Carries the 1-based line number of the offending input line.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, long line)
      : Error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class DuplicateRegistration : public Error {
 public:
  using Error::Error;
};

class UnknownPlugin : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class EmptyError : public Error {
 public:
  using Error::Error;
};

class MissingField : public Error {
 public:
  using Error::Error;
};

class SampleTooLong : public Error {
 public:
  using Error::Error;
};

class BadShard : public Error {
 public:
  using Error::Error;
};

class TargetOutOfRange : public Error {
 public:
  using Error::Error;
};

class NotScalar : public Error {
 public:
  using Error::Error;
};

class PositionOverflow : public Error {
 public:
  using Error::Error;
};

class BadIteration : public Error {
 public:
  using Error::Error;
};

class UnknownSchedule : public Error {
 public:
  using Error::Error;
};

}  // namespace pgen
