#pragma once

#include <stdexcept>
#include <string>

namespace cmm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed mesh file (header, counts, tokens).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Mesh content violates a TriangleMesh invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

class DegenerateTriangleError : public Error {
public:
    using Error::Error;
};

class NotPositiveDefinite : public Error {
public:
    using Error::Error;
};

/// Columns of the projection target are linearly dependent in the A-metric.
class RankDeficient : public Error {
public:
    using Error::Error;
};

class FactorizationError : public Error {
public:
    using Error::Error;
};

/// Invalid solver or harness configuration. The message names the field.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error("invalid " + field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const { return field_; }

private:
    std::string field_;
};

} // namespace cmm
