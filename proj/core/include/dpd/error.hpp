#pragma once

#include <stdexcept>
#include <string>

namespace dpd {

// Bad arguments: dimensions, ranges, malformed input. The CLI maps this to exit code 2.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A computation that was well posed but could not be completed to tolerance
// (singular matrix, optimizer failure, truncation failure). Exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw DomainError(what);
}

}  // namespace dpd
