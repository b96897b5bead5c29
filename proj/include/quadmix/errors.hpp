#pragma once

#include <stdexcept>
#include <string>

namespace quadmix {

// Invalid input data or configuration. The CLI maps this to exit code 2.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// External evaluator misbehavior: crash, timeout, unparseable loss. Exit code 3.
struct EvaluatorError : std::runtime_error {
    explicit EvaluatorError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace quadmix
