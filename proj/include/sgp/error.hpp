#pragma once

#include <stdexcept>
#include <string>

namespace sgp {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmptyAnnotationSetError : Error {
    EmptyAnnotationSetError() : Error("annotation set is empty") {}
};

struct OutOfRangeError : Error {
    using Error::Error;
};

// Raised when p_i > 0 where q_i = 0; the divergence would be +inf.
struct SupportMismatchError : Error {
    using Error::Error;
};

struct DegenerateDistributionError : Error {
    using Error::Error;
};

struct BadRangeError : Error {
    using Error::Error;
};

struct ShapeMismatchError : Error {
    using Error::Error;
};

struct DivergedError : Error {
    using Error::Error;
};

struct MissingPredictorError : Error {
    using Error::Error;
};

struct ProtocolViolationError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace sgp
