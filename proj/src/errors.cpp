#include "colony/errors.hpp"

namespace colony {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::InvalidGeometry: return "invalid-geometry";
    case ErrorKind::Configuration: return "configuration";
    case ErrorKind::UndefinedMetric: return "undefined-metric";
    case ErrorKind::ReferentialIntegrity: return "referential-integrity";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Io: return "io";
    case ErrorKind::Remote: return "remote";
    case ErrorKind::Transport: return "transport";
    case ErrorKind::Protocol: return "protocol";
    }
    return "unknown";
}

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::Io:
    case ErrorKind::Transport:
    case ErrorKind::Remote:
        return 1;
    default:
        return 2;
    }
}

} // namespace colony
