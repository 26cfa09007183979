#pragma once

#include <stdexcept>
#include <string>

namespace unirnnt {

/// Failure raised by any library operation. `code()` carries a stable
/// identifier (e.g. "NonFiniteInput") that callers and tests match on.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& detail)
      : std::runtime_error(code + (detail.empty() ? "" : ": " + detail)),
        code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

[[noreturn]] inline void fail(const std::string& code, const std::string& detail = {}) {
  throw Error(code, detail);
}

}  // namespace unirnnt
