#pragma once

#include <stdexcept>
#include <string>

namespace ocufuse {

// Error taxonomy shared by all modules. The CLI maps anything derived from
// validation_error to exit code 2; everything else is an internal error (1).
class error : public std::runtime_error {
 public:
  explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

class validation_error : public error {
 public:
  using error::error;
};

// Bad caller-supplied value (wrong shape, out-of-range parameter).
class argument_error : public validation_error {
 public:
  using validation_error::validation_error;
};

// Unparseable input file; message names the file and line.
class parse_error : public validation_error {
 public:
  using validation_error::validation_error;
};

// Input parsed but violates a schema rule (e.g. mixed dimensions).
class schema_error : public validation_error {
 public:
  using validation_error::validation_error;
};

// Well-formed input carrying invalid data (NaN coordinate, duplicate key).
class data_error : public validation_error {
 public:
  using validation_error::validation_error;
};

class io_error : public validation_error {
 public:
  using validation_error::validation_error;
};

// Evaluation-protocol violation (overlapping splits, no common subjects).
class protocol_error : public validation_error {
 public:
  using validation_error::validation_error;
};

// Degenerate statistics: zero variance, undefined concordance, singular fit.
class statistics_error : public validation_error {
 public:
  using validation_error::validation_error;
};

}  // namespace ocufuse
