#pragma once

#include <stdexcept>
#include <string>

namespace centeratt {

// Thrown when tensor shapes or channel counts do not line up. The message
// names the offending dimension.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Bad configuration value or cross-module inconsistency detected at load.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// File read/write failure.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace centeratt
