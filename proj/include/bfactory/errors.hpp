// Copyright 2026 The bfactory Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bfactory {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter is outside the domain accepted by an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Coefficients that cannot belong to a valid series, e.g. a positive
/// coefficient after the partial sums already reached one.
class InconsistentSeries : public Error {
 public:
  using Error::Error;
};

/// An interval enclosure is too wide to decide a comparison or a digit and
/// the precision ceiling has been reached.
class InsufficientPrecision : public Error {
 public:
  using Error::Error;
};

/// A stopping probability was requested past the terminal index of a finite
/// series.
class UndefinedIndex : public Error {
 public:
  using Error::Error;
};

/// The two-phase baseline sampler drew a length above its cap.
class TruncationError : public Error {
 public:
  TruncationError(const std::string& what, std::size_t cap)
      : Error(what), cap_(cap) {}
  std::size_t cap() const noexcept { return cap_; }

 private:
  std::size_t cap_;
};

/// Syntax or semantic error in an expression, with the offending offset.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t position)
      : Error(message + " at position " + std::to_string(position)),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

}  // namespace bfactory
