#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace trendopt {

/// Precondition violation on caller-supplied values (shapes, ranges, labels).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A non-finite value showed up where a finite one is required.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, std::size_t index)
        : std::runtime_error(what), index_(index) {}

    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

/// Malformed on-disk data. `offset` is the byte position where parsing stopped.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& key_path, const std::string& message)
        : std::runtime_error(key_path.empty() ? message : key_path + ": " + message),
          key_path_(key_path) {}

    const std::string& key_path() const noexcept { return key_path_; }

private:
    std::string key_path_;
};

class NoConvergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace trendopt
