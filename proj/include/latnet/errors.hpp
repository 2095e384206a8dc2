#pragma once

#include <stdexcept>
#include <string>

namespace latnet {

// Base error with a stable machine-readable category. The CLI maps
// categories to exit codes; library code throws the derived types.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(message), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("shape", msg) {}
};

struct ArgumentError : Error {
    explicit ArgumentError(const std::string& msg) : Error("argument", msg) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error("format", msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("io", msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

struct ChecksumError : Error {
    explicit ChecksumError(const std::string& msg) : Error("checksum", msg) {}
};

struct VersionError : Error {
    explicit VersionError(const std::string& msg) : Error("version", msg) {}
};

struct ArchitectureError : Error {
    explicit ArchitectureError(const std::string& msg) : Error("architecture", msg) {}
};

}  // namespace latnet
