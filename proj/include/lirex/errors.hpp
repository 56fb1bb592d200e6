#pragma once

#include <stdexcept>
#include <string>

namespace lirex {

// Base class for all errors raised by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// File or directory could not be read/written.
struct IoError : Error {
  using Error::Error;
};

// Input text (corpus row, prompt, config file) does not match the expected shape.
struct FormatError : Error {
  using Error::Error;
};

// A configuration value is missing, out of range, or unusable in this build.
struct ConfigError : Error {
  using Error::Error;
};

// Internal invariants between two pieces of data were violated (misaligned
// masks, vocabulary mismatch, untrained model use, ...).
struct ConsistencyError : Error {
  using Error::Error;
};

}  // namespace lirex
