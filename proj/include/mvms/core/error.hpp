#pragma once

#include <stdexcept>
#include <string>

namespace mvms {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Array/tensor dimensions do not agree with what an operation expects.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid or inconsistent scan geometry / view subset.
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Out-of-range argument that is neither a shape nor a geometry problem.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Misuse of the differentiation tape (non-scalar root, double backward).
class TapeError : public Error {
public:
    using Error::Error;
};

/// Malformed or incompatible file (tensor, checkpoint, config, manifest).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Checkpoint hyperparameters disagree with the model it is loaded into.
class CheckpointMismatch : public FormatError {
public:
    using FormatError::FormatError;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ArgumentError(msg);
}

inline void require_shape(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

} // namespace detail

} // namespace mvms
