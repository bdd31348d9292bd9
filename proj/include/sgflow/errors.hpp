#pragma once

#include <stdexcept>
#include <string>

namespace sgflow {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Moments requested for an empty (or sliver) polygon.
class DegenerateCell : public Error {
public:
    using Error::Error;
};

/// Two seeds closer than the coincidence threshold.
class CoincidentSeeds : public Error {
public:
    CoincidentSeeds(std::size_t i, std::size_t j, const std::string& msg)
        : Error(msg), first(i), second(j) {}
    std::size_t first;
    std::size_t second;
};

class IndexOutOfRange : public Error {
public:
    using Error::Error;
};

/// The reduced Laplacian could not be factored (dual graph disconnected).
class SingularHessian : public Error {
public:
    using Error::Error;
};

/// Seeds came closer than the configured separation floor.
class SeparationLoss : public Error {
public:
    SeparationLoss(double sep, const std::string& msg) : Error(msg), separation(sep) {}
    double separation;
};

class DegenerateMass : public Error {
public:
    using Error::Error;
};

/// Malformed run configuration. `field` names the offending key path,
/// `line` is 1-based when the error comes from the JSON parser (0 otherwise).
class ConfigError : public Error {
public:
    ConfigError(std::string field_path, std::size_t line_no, const std::string& msg)
        : Error(msg), field(std::move(field_path)), line(line_no) {}
    std::string field;
    std::size_t line;
};

}  // namespace sgflow
