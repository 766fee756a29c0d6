#pragma once

#include <stdexcept>
#include <string>

namespace layoutvae {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes or lengths do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A NaN/Inf showed up where a finite value is required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Input data violates a documented invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A serialized file is malformed (bad magic, version, shape, truncation).
class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Raised when a RICO directory yields no usable documents.
class IngestError : public Error {
public:
    using Error::Error;
};

}  // namespace layoutvae
