#pragma once

#include <string>
#include <string_view>

namespace colony {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

std::string base64_encode(std::string_view data);
/// Throws ErrorKind::Validation on malformed input.
std::string base64_decode(std::string_view text);

} // namespace colony
