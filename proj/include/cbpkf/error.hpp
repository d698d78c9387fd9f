#pragma once

#include <stdexcept>
#include <string>

namespace cbpkf {

/// Invalid input: bad configuration values, inconsistent dimensions, wrong
/// estimate kind passed to a filter stage.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// A factorization or solve failed (singular or indefinite operand).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cbpkf
