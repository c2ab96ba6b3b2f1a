#pragma once

#include <stdexcept>
#include <string>

namespace pvrecon {

enum class ErrorCode {
  Domain = 1,       // argument outside its mathematical domain
  OutOfDomain,      // query outside a grid or field
  Config,           // invalid configuration value or unstable step size
  Collision,        // microscopic collision invariant violated
  StepSize,         // a step produced an invalid state
  Unsupported,      // operation not available for this variant
  Divergence,       // non-finite loss during optimization
  Coverage,         // identification data too narrow
  EmptyInput,
  Parse,
  Io,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace pvrecon
