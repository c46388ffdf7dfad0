#pragma once

#include <stdexcept>
#include <string>

namespace fgns {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed file contents (bad magic number, bad header).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Two inputs that must agree do not (e.g. image and label counts).
class ConsistencyError : public Error {
public:
    using Error::Error;
};

/// File missing, unreadable or truncated.
class IoError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(int epoch, const std::string& what)
        : Error(what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

/// Input carries no information to fit against (e.g. zero perturbations).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

/// An artifact was produced from a different model or dataset than the one supplied.
class ChecksumMismatchError : public Error {
public:
    using Error::Error;
};

/// Not enough instances to run the requested analysis.
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

}  // namespace fgns
