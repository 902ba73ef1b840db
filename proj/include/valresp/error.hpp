#pragma once

#include <stdexcept>
#include <string>

namespace valresp {

// Error categories map onto CLI exit codes: config 2, data 3, runtime 4.
enum class ErrorKind { Config = 2, Data = 3, Runtime = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class RuntimeError : public Error {
public:
    explicit RuntimeError(const std::string& what) : Error(ErrorKind::Runtime, what) {}
};

// Raised when a caller violates an operation's input contract (empty text, bad index).
class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

}  // namespace valresp
