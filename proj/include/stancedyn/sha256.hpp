#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace stancedyn {

/// SHA-256 digest as a lowercase hex string.
std::string sha256_hex(std::string_view data);

/// Digest of a file's contents. Throws DataError when unreadable.
std::string sha256_file(const std::string& path);

} // namespace stancedyn
