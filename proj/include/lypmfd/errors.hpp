#pragma once

#include <stdexcept>
#include <string>

namespace lypmfd {

// Error taxonomy mirrored by the CLI exit codes:
//   ConditionError -> 1, NumericError -> 2, ConfigError -> 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Config file / DSL / dimension-declaration problems.
struct ConfigError : Error {
    using Error::Error;
};

// A1/A2/A3/C1/C2 style assumption failures (empty sigma interval, ...).
struct ConditionError : Error {
    using Error::Error;
};

// Runtime numerical failures: overflow, tail tolerance, divergence, blow-up.
struct NumericError : Error {
    using Error::Error;
};

// Mismatched vector/matrix sizes, naming the offending component.
struct DimensionError : ConfigError {
    using ConfigError::ConfigError;
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int condition_failure = 1;
inline constexpr int numerical_failure = 2;
inline constexpr int config_error = 3;
}  // namespace exit_code

}  // namespace lypmfd
