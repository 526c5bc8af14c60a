#pragma once

#include <stdexcept>

namespace imba {

/// Bad invocation or configuration (missing paths, out-of-range settings).
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input data that fails to parse or violates a format invariant.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace imba
