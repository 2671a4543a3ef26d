#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace calib_il {

// Base of every error raised by the library. The CLI maps the three
// subclasses onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or violated precondition on caller-supplied settings.
class SpecError : public Error {
 public:
  using Error::Error;
};

// Inputs that break a data invariant: bad labels, missing states, schema
// violations in files.
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or numerically degenerate inputs.
class NumericError : public Error {
 public:
  using Error::Error;
};

// File-format error with the offending location ("path:line" or a JSON key).
class FormatError : public DataError {
 public:
  enum class Kind {
    kIo,
    kMalformedHeader,
    kSchema,
    kNonFinite,
    kMetadataMismatch,
    kDuplicateEntry,
    kMissingEntry,
    kOutOfRange,
  };

  FormatError(Kind kind, std::string location, const std::string& what)
      : DataError(location + ": " + what), kind_(kind), location_(std::move(location)) {}

  Kind kind() const noexcept { return kind_; }
  const std::string& location() const noexcept { return location_; }

 private:
  Kind kind_;
  std::string location_;
};

}  // namespace calib_il
