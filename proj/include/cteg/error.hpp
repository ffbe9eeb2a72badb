#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace cteg {

/// Library-wide error. `code` is a stable machine-readable identifier,
/// `what()` carries the human-readable message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

[[noreturn]] inline void fail(const std::string& code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool cond, const std::string& code, const std::string& message) {
  if (!cond) fail(code, message);
}

}  // namespace cteg
