#pragma once

#include <cstddef>
#include <string>

namespace selfcert {

// Hex digest of a byte buffer.
std::string sha256_hex(const void * data, size_t len);
std::string sha256_hex(const std::string & data);

// Hex digest of a file's contents; throws ValidationError if unreadable.
std::string sha256_file(const std::string & path);

} // namespace selfcert
