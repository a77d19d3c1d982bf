// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace transact {

/// Base of every error raised by the library. `kind()` is a stable
/// machine-readable tag that the CLI copies into its error records.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

/// Shape or precondition violated by the caller.
struct ContractError : Error {
  explicit ContractError(const std::string& w) : Error("contract_violation", w) {}
};

/// Invalid or inconsistent configuration value.
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error("configuration", w) {}
};

struct LookupError : Error {
  explicit LookupError(const std::string& w) : Error("lookup", w) {}
};

/// Value outside the mathematical domain of an operation.
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error("domain", w) {}
};

struct EvaluationError : Error {
  explicit EvaluationError(const std::string& w) : Error("evaluation", w) {}
};

struct FutureEventError : Error {
  explicit FutureEventError(const std::string& w) : Error("future_event", w) {}
};

struct GenerationError : Error {
  explicit GenerationError(const std::string& w) : Error("generation", w) {}
};

struct RestoreError : Error {
  explicit RestoreError(const std::string& w) : Error("restore", w) {}
};

struct UndefinedMetricError : Error {
  explicit UndefinedMetricError(const std::string& w) : Error("undefined_metric", w) {}
};

struct TrainingError : Error {
  explicit TrainingError(const std::string& w) : Error("training", w) {}
};

struct IoError : Error {
  explicit IoError(const std::string& w) : Error("io", w) {}
};

}  // namespace transact
