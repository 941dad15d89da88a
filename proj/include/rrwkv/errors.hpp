#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rrwkv {

// Violated precondition or shape contract.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  DomainError(const std::string& what, std::size_t index)
      : std::domain_error(what + " (index " + std::to_string(index) + ")"),
        index_(index) {}
  explicit DomainError(const std::string& what)
      : std::domain_error(what), index_(npos) {}

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

// Fixed-size parameter storage exceeded (e.g. medium index beyond c_max).
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// Malformed external input: token ids, config files, checkpoints.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const char* what) {
  if (!cond) throw ContractViolation(what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

}  // namespace rrwkv
