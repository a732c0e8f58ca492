#pragma once

#include <stdexcept>
#include <string>

namespace mvcov {

/// Process exit codes used by the command-line front end.
enum class ExitCode : int {
  success = 0,
  config_error = 2,
  numeric_failure = 3,
  data_error = 4,
};

class Error : public std::runtime_error {
public:
  Error(ExitCode code, const std::string &what)
      : std::runtime_error(what), code_(code) {}

  ExitCode code() const { return code_; }

  std::string kind() const {
    switch (code_) {
    case ExitCode::config_error:
      return "config_error";
    case ExitCode::numeric_failure:
      return "numeric_failure";
    case ExitCode::data_error:
      return "data_error";
    default:
      return "error";
    }
  }

private:
  ExitCode code_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string &what)
      : Error(ExitCode::config_error, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string &what)
      : Error(ExitCode::data_error, what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string &what)
      : Error(ExitCode::numeric_failure, what) {}
};

// Precondition violations on library calls (bad indices, negative distance,
// non-finite arguments) are reported as numeric failures.
inline void require(bool condition, const std::string &message) {
  if (!condition) {
    throw NumericError(message);
  }
}

} // namespace mvcov
