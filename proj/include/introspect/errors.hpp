// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <stdexcept>
#include <string>

namespace introspect {

// Base of every error raised by the library. The CLI maps InputError and its
// subclasses to exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: unreadable files, malformed text, invalid configuration.
class InputError : public Error {
 public:
  using Error::Error;
};

class IoError : public InputError {
 public:
  using InputError::InputError;
};

// Malformed binary payload or line-delimited record.
class FormatError : public InputError {
 public:
  using InputError::InputError;
};

// A value violates a domain invariant (negative activation, NaN, bad box).
class InvariantError : public InputError {
 public:
  using InputError::InputError;
};

// A representation needs an input the frame does not carry.
class MissingInput : public InputError {
 public:
  using InputError::InputError;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite gradient or the dataset cannot be trained on.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace introspect
