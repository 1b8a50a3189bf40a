#pragma once

#include <stdexcept>
#include <string>

namespace promptnorm {

/// Base class for every error raised by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tensor extents disagree with what an operation requires.
struct ShapeError : Error {
    using Error::Error;
};

/// A value violates a domain constraint (non-finite entry, bad range).
struct ValueError : Error {
    using Error::Error;
};

/// An input is degenerate for the requested operation (e.g. zero-norm
/// vector fed to cosine similarity).
struct DegenerateInputError : Error {
    using Error::Error;
};

/// A 1-based prompt position lies outside [1, L].
struct PositionError : Error {
    using Error::Error;
};

/// An API contract was violated (non-scalar backward root, cross-tape
/// operands, inconsistent matrix extents between collaborators).
struct ContractError : Error {
    using Error::Error;
};

/// Configuration problems: unknown keys, values out of range, extents
/// that do not fit the constructed model.
struct ConfigError : Error {
    using Error::Error;
};

/// Training produced a non-finite value; message carries the diagnostic.
struct DivergenceError : Error {
    using Error::Error;
};

/// Filesystem and serialization failures.
struct IoError : Error {
    using Error::Error;
};

/// A persisted document carries an unsupported schema version.
struct VersionError : Error {
    using Error::Error;
};

}  // namespace promptnorm
