#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wbc {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid or infeasible configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Evaluation protocol violated (e.g. a probe without gallery matches).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API contract (stale backward cache, wrong variant).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// The finite-difference oracle hit a non-finite function value.
class OracleError : public Error {
 public:
  OracleError(const std::string& what, std::size_t index)
      : Error(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

/// Malformed tensor file or manifest. Carries the byte offset of the fault.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Training produced a NaN/Inf.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

}  // namespace wbc
