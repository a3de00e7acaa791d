#pragma once

#include <stdexcept>
#include <string>

namespace gridinfer {

// Error categories map one-to-one onto the C API / CLI exit codes.
enum class ErrorCode {
  Config = 2,   // bad input files, invalid parameters, schema violations
  Numeric = 3,  // non-convergence, singular systems, non-finite values
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline Error config_error(const std::string& what) {
  return Error(ErrorCode::Config, what);
}
inline Error numeric_error(const std::string& what) {
  return Error(ErrorCode::Numeric, what);
}

}  // namespace gridinfer
