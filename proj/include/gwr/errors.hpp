#pragma once

#include <stdexcept>
#include <string>

namespace gwr {

// Maps to CLI exit code 2.
struct InvalidInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/Inf detected during training or evaluation. CLI exit code 3.
struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// CLI exit code 4.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A test-tainted record reached a training-only code path. This is a
// programming error, not a user error, hence logic_error.
struct LeakageError : std::logic_error {
    using std::logic_error::logic_error;
};

}  // namespace gwr
