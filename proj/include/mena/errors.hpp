#pragma once

#include <stdexcept>
#include <string>

namespace mena {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid construction parameters (dimensions, variability, gains).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Vector/matrix length does not match the expected shape.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

/// A value lies outside its admissible interval (coordinates, inputs).
class RangeError : public Error {
public:
    explicit RangeError(const std::string& msg) : Error(msg) {}
};

/// Malformed command traffic reaching the device layer.
class ProtocolError : public Error {
public:
    explicit ProtocolError(const std::string& msg) : Error(msg) {}
};

/// The backend transport is gone; callers should fail fast, not retrain.
class BackendUnavailableError : public Error {
public:
    explicit BackendUnavailableError(const std::string& msg) : Error(msg) {}
};

/// Dataset cannot support the requested operation (empty split, max == min).
class DegenerateDataError : public Error {
public:
    explicit DegenerateDataError(const std::string& msg) : Error(msg) {}
};

/// Optimizer failed to reach its stopping criterion or diverged.
class TrainingError : public Error {
public:
    TrainingError(const std::string& msg, double kkt_residual = 0.0)
        : Error(msg), kkt_residual(kkt_residual) {}

    double kkt_residual;
};

/// A data file violates its documented schema.
class IngestionError : public Error {
public:
    explicit IngestionError(const std::string& msg) : Error(msg) {}
};

}  // namespace mena
