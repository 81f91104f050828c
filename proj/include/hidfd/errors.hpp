#pragma once

#include <stdexcept>
#include <string>

namespace hidfd {

// Operand shapes do not conform for the named operation.
class DimensionError : public std::invalid_argument {
 public:
  DimensionError(const std::string& op, const std::string& detail)
      : std::invalid_argument(op + ": " + detail), op_(op) {}
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

// A caller violated an API precondition (non-scalar loss, mixed tapes, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid or inconsistent configuration, including missing input files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A mathematical precondition failed (support violation, empty input, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Training produced a non-finite or exploding loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& phase, std::size_t epoch, const std::string& detail)
      : std::runtime_error(phase + " diverged at epoch " + std::to_string(epoch) + ": " + detail),
        phase_(phase),
        epoch_(epoch) {}
  const std::string& phase() const noexcept { return phase_; }
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::string phase_;
  std::size_t epoch_;
};

}  // namespace hidfd
