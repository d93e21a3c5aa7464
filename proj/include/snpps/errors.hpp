#pragma once

#include <stdexcept>
#include <string>

namespace snpps {

/// Caller violated a documented precondition (bad shapes, unknown agent, ...).
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A configuration value is invalid. `field` names the offending path or token.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& message)
        : std::runtime_error(field.empty() ? message : field + ": " + message),
          field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Numeric failure during training (non-finite gradients, losses or logits).
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace snpps
