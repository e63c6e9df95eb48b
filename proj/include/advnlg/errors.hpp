#pragma once

#include <stdexcept>
#include <string>

namespace advnlg {

// Error taxonomy shared by the whole library. The CLI maps input/config
// problems to exit code 2 and numerical aborts to exit code 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct IndexError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct UsageError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

// Raised when a training loss goes non-finite; carries the diagnostic path.
struct NumericalAbort : Error { using Error::Error; };

}  // namespace advnlg
