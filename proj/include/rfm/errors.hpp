#pragma once

#include <stdexcept>
#include <string>

namespace rfm {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/layer shape disagreement. Message carries both shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid module configuration (head split, ratios, tolerances...).
struct ConfigError : Error {
    using Error::Error;
};

// Scalar argument outside its mathematical domain.
struct DomainError : Error {
    using Error::Error;
};

// Sequence lengths out of sync between latent and condition branches.
struct AlignmentError : Error {
    using Error::Error;
};

// Sequence exceeds the positional-embedding capacity.
struct CapacityError : Error {
    using Error::Error;
};

// API misuse (non-scalar loss, empty batch...).
struct UsageError : Error {
    using Error::Error;
};

// Malformed file container (magic/version/truncation).
struct FormatError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// NaN/Inf detected in checked mode or inside a solve/training step.
struct NumericError : Error {
    using Error::Error;
};

// Adaptive solver step size collapsed below its floor.
struct StiffnessError : Error {
    using Error::Error;
};

// A pipeline stage was invoked before the artifact it consumes exists.
struct MissingPrerequisite : Error {
    using Error::Error;
};

}  // namespace rfm
