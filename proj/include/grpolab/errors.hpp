#pragma once

#include <stdexcept>
#include <string>

namespace grpolab {

// Invalid argument values (sizes, fractions, temperatures).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Caller broke an interface precondition (mismatched task/trajectory, batch size).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed or inconsistent configuration; the CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// State space of an exact computation exceeds its documented cap.
class UnsupportedSizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure inside one pipeline stage; the message is prefixed with the stage name.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("[" + stage + "] " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace grpolab
