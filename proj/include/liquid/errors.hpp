#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace liquid {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class UnsupportedKindError : public Error {
public:
    using Error::Error;
};

/// Raised when a computation produces a non-finite value. `index` names the
/// offending neuron, timestep or parameter coordinate when known.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what, std::optional<std::size_t> index = std::nullopt)
        : Error(what), index_(index) {}

    std::optional<std::size_t> index() const noexcept { return index_; }

private:
    std::optional<std::size_t> index_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace liquid
