#pragma once

#include <stdexcept>
#include <string>

namespace colony {

enum class ErrorKind {
    InvalidGeometry,
    Configuration,
    UndefinedMetric,
    ReferentialIntegrity,
    Validation,
    Io,
    Remote,     // service answered with a non-2xx status
    Transport,  // service unreachable
    Protocol,   // service answered 2xx with a payload that breaks the contract
};

const char* to_string(ErrorKind kind) noexcept;

/// Base for every error raised by the library. The kind drives CLI exit codes.
class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

class RemoteError : public Error {
  public:
    RemoteError(int status, const std::string& message)
        : Error(ErrorKind::Remote, message), status_(status) {}

    int status() const noexcept { return status_; }

  private:
    int status_;
};

/// 0 success, 1 I/O or transport, 2 validation or usage.
int exit_code(ErrorKind kind) noexcept;

} // namespace colony
