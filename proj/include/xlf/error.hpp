#pragma once

#include <stdexcept>
#include <string>

namespace xlf {

// Raised when a config, spec, or argument violates its contract.
// The CLI maps this to exit code 1; everything else exits 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

class CheckpointError : public std::runtime_error {
public:
    enum class Kind { bad_magic, version_mismatch, hash_mismatch, truncated };

    CheckpointError(Kind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}

    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

} // namespace xlf
