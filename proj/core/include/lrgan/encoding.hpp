#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace lrgan {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file_hex(const std::string& path);

std::string base64_encode(std::string_view bytes);
/// Throws std::invalid_argument on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace lrgan
