#pragma once

#include <stdexcept>
#include <string>

namespace jacprobe {

// Violated precondition or infeasible request on otherwise well-formed input.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed serialized input; the message names the offending field.
class FormatError : public Error {
public:
    using Error::Error;
};

} // namespace jacprobe
