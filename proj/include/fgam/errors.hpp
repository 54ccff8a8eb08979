#pragma once

#include <stdexcept>
#include <string>

namespace fgam {

// Malformed or inconsistent input data (CSV parse failures, bad subject ids).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure inside a fitter (Cholesky breakdown, non-finite state).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace fgam
