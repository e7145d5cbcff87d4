#pragma once

#include <stdexcept>
#include <string>

namespace qd {

/// A numerical procedure failed to converge or hit a singular system.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or missing input data (files, traces).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace qd
