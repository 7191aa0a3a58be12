#pragma once

#include <stdexcept>
#include <string>

namespace s2w {

// Error taxonomy shared across the toolkit. The CLI maps these onto exit
// codes: usage/config -> 1, data/io/schema -> 2, numeric faults -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (JSON, CSV, word-vector files).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Structurally invalid data: required fields missing, bad shapes in files.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Corpus/dataset contract violations (split disjointness, coverage, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// Tensor dimension mismatches.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf detected during numeric computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace s2w
