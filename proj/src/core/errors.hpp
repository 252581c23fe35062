#pragma once

#include <stdexcept>
#include <string>

namespace xmbt {

// Error families map onto the CLI exit codes: usage -> 2, dependency -> 3,
// anything else -> 4.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DependencyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RuntimeFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace xmbt
