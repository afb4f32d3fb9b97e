#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace chartex {

// All recoverable failures carry a stable kind string ("MalformedAnnotation",
// "DanglingReference", ...) so the CLI can report structured errors.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& detail)
      : std::runtime_error(kind + ": " + detail), kind_(std::move(kind)) {}

  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

[[noreturn]] inline void fail(const std::string& kind, const std::string& detail) {
  throw Error(kind, detail);
}

inline void require(bool ok, const std::string& kind, const std::string& detail) {
  if (!ok) fail(kind, detail);
}

}  // namespace chartex
