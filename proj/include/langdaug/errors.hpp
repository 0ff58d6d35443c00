#pragma once

#include <stdexcept>
#include <string>

namespace langdaug {

/// Root of every error thrown by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shapes or lengths that do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A value went non-finite or out of the representable range.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration or precondition on caller-supplied parameters.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A file had the wrong magic, version or dtype.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Reading or writing a file failed, including truncated payloads.
class IoError : public Error {
public:
    using Error::Error;
};

/// Decomposition failures (e.g. a covariance that is not positive definite).
class LinearAlgebraError : public Error {
public:
    using Error::Error;
};

/// An upstream artifact a subcommand depends on is absent.
class MissingArtifactError : public Error {
public:
    using Error::Error;
};

/// A Langevin chain produced a non-finite iterate.
class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, int step, double energy)
        : NumericError(what), step_(step), energy_(energy) {}

    int step() const noexcept { return step_; }
    double energy() const noexcept { return energy_; }

private:
    int step_;
    double energy_;
};

/// Training aborted; carries the iteration (or batch) at which it happened.
class TrainingError : public NumericError {
public:
    TrainingError(const std::string& what, long iteration)
        : NumericError(what), iteration_(iteration) {}

    long iteration() const noexcept { return iteration_; }

private:
    long iteration_;
};

}  // namespace langdaug
