#pragma once

#include <stdexcept>
#include <string>

namespace biomoe {

/// Failure categories map one-to-one onto the CLI exit codes.
enum class ErrorKind { usage = 2, processing = 3, integrity = 4, shape = 5 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

class ProcessingError : public Error {
public:
    explicit ProcessingError(const std::string& what) : Error(ErrorKind::processing, what) {}
};

class IntegrityError : public Error {
public:
    explicit IntegrityError(const std::string& what) : Error(ErrorKind::integrity, what) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(ErrorKind::shape, what) {}
};

}  // namespace biomoe
