#pragma once

#include <stdexcept>
#include <string>

namespace ctiunet {

// Inconsistent shapes, channel counts or settings. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data violating a documented contract (non-binary mask, wrong
// channel count, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Misuse of the verification / optimization machinery.
class HarnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LoadErrorKind {
  kIo,
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kInconsistent,
};

class LoadError : public std::runtime_error {
 public:
  LoadError(LoadErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  LoadErrorKind kind() const { return kind_; }

 private:
  LoadErrorKind kind_;
};

}  // namespace ctiunet
