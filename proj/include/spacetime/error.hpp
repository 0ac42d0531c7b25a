#pragma once

#include <stdexcept>
#include <string>

namespace spacetime {

// Base of every exception thrown by the library. The C API maps each
// subclass onto one status code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Bad magic, unsupported version or truncated payload in a binary container.
class FormatError : public Error {
public:
    using Error::Error;
};

// Non-finite loss or gradient during optimisation.
class DivergenceError : public Error {
public:
    using Error::Error;
};

}  // namespace spacetime
