#pragma once

#include <stdexcept>
#include <string>

namespace canvasinfill {

/// Violated precondition: shapes, sizes or argument ranges.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid or inconsistent configuration values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dataset or image files that cannot be read.
class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a representation cannot be L2-normalized.
class DegenerateRepresentationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
[[noreturn]] inline void contract_failure(const std::string& what) { throw ContractError(what); }
}  // namespace detail

}  // namespace canvasinfill

#define CANVASINFILL_EXPECT(cond, msg)                       \
  do {                                                       \
    if (!(cond)) ::canvasinfill::detail::contract_failure(msg); \
  } while (0)
