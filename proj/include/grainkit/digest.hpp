#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace grainkit {

using Sha256 = std::array<uint8_t, 32>;

Sha256 sha256(std::span<const uint8_t> bytes);
Sha256 sha256(std::string_view text);
std::string to_hex(std::span<const uint8_t> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_hex(std::span<const uint8_t> bytes);
std::string file_sha256_hex(const std::filesystem::path& path);

std::string base64_encode(std::span<const uint8_t> bytes);
std::vector<uint8_t> base64_decode(std::string_view text);

} // namespace grainkit
