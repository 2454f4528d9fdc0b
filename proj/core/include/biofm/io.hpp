#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace biofm::io {

std::uint32_t crc32(std::span<const std::uint8_t> bytes);
std::uint32_t crc32(std::string_view text);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_atomic(const std::filesystem::path& path, std::string_view text);

// Shortest round-trippable decimal for CSV output (locale independent).
std::string format_double(double v);
std::string format_float(float v);

// Little-endian float32 encode/decode.
void append_f32_le(std::vector<std::uint8_t>& out, std::span<const float> values);
void read_f32_le(std::span<const std::uint8_t> bytes, std::size_t offset, std::span<float> out);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace biofm::io
