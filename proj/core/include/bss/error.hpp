#pragma once

#include <stdexcept>
#include <string>

namespace bss {

// Precondition or dimension contract broken by the caller.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid configuration value, reported with the offending key or JSON path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A linear system stayed singular after diagonal loading. Separator code
// rethrows it with the frequency bin and source attached.
class SingularMatrix : public std::runtime_error {
 public:
  explicit SingularMatrix(const std::string& what, int bin = -1,
                          int source = -1)
      : std::runtime_error(what), bin_(bin), source_(source) {}

  int bin() const { return bin_; }
  int source() const { return source_; }

 private:
  int bin_;
  int source_;
};

}  // namespace bss
