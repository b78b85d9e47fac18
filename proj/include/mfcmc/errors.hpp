#pragma once

#include <stdexcept>
#include <string>

namespace mfcmc {

// Every failure raised by the library derives from Error. The CLI maps the
// concrete type to a stable exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument values (sizes, ranges, mismatched dimensions).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Internally inconsistent data (weights that do not sum to one, ragged points).
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Mass outside the state constraint set.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Two measures that should agree (plan marginals, base clouds) do not.
class CouplingError : public Error {
 public:
  using Error::Error;
};

// A configured cap on nodes, particles or lineages was exceeded.
class ResourceError : public Error {
 public:
  using Error::Error;
};

// Integration settings that cannot work (unstable step, negative mass).
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

// Raised by the experiment config parser; carries the offending field path.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field_path, const std::string& message);
  const std::string& field_path() const { return field_path_; }

 private:
  std::string field_path_;
};

}  // namespace mfcmc
