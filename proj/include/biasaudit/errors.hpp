#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace biasaudit {

/// Failure category. The CLI maps these onto process exit codes.
enum class ErrorKind {
    Validation,   // malformed input, violated precondition
    Degenerate,   // a requested headline statistic is undefined
    Io,           // unreadable or unwritable file
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

/// Wraps an error raised inside a pipeline stage; the message is prefixed with the stage name.
class StageError : public Error {
public:
    StageError(std::string stage, const Error& inner)
        : Error(inner.kind(), stage + ": " + inner.what()), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace biasaudit
