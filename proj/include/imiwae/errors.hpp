#pragma once

#include <stdexcept>
#include <string>

namespace imiwae {

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error("shape error: " + what) {}
};

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& what) : std::runtime_error("domain error: " + what) {}
};

struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error("parse error: " + what) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error("numeric error: " + what) {}
};

struct SpecError : std::runtime_error {
    explicit SpecError(const std::string& what) : std::runtime_error("spec error: " + what) {}
};

struct CalibrationError : std::runtime_error {
    explicit CalibrationError(const std::string& what)
        : std::runtime_error("calibration error: " + what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error("config error: " + what) {}
};

}  // namespace imiwae
