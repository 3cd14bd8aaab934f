#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lfqa {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or schema-violating corpus content.
class CorpusError : public Error {
public:
    CorpusError(std::string message, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + message : message), line_(line)
    { }

    /// 1-based line number, 0 when the error is not tied to a line.
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A score whose formula has no defined value for the given input.
class UndefinedScoreError : public Error {
public:
    using Error::Error;
};

/// Bad configuration (unknown key, type mismatch, missing required value).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Failure inside a text-generation backend.
class GenerationError : public Error {
public:
    enum class Kind { transport, credential, authentication, rejected, schema, fixture_missing, fixture_conflict, empty_output };

    GenerationError(Kind kind, std::string message) : Error(std::move(message)), kind_(kind) { }

    Kind kind() const noexcept { return kind_; }
    bool transient() const noexcept { return kind_ == Kind::transport; }

private:
    Kind kind_;
};

} // namespace lfqa
