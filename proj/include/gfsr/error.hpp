#pragma once

#include <stdexcept>
#include <string>

namespace gfsr {

// Broad failure classes; the CLI maps them onto exit codes.
enum class ErrorKind {
  usage,      // bad flags, bad config keys
  data,       // missing/malformed files, inconsistent inputs
  numerical,  // non-finite losses and similar
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_data(const std::string& what) {
  throw Error(ErrorKind::data, what);
}

[[noreturn]] inline void fail_usage(const std::string& what) {
  throw Error(ErrorKind::usage, what);
}

[[noreturn]] inline void fail_numerical(const std::string& what) {
  throw Error(ErrorKind::numerical, what);
}

}  // namespace gfsr
