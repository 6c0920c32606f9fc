#pragma once

// Minimal image persistence: binary 8-bit PGM for viewing, CSV for exact
// values. Only single-channel frames are written.

#include <filesystem>
#include <string>

#include "liquid/perception.hpp"

namespace liquid {

/// Values are clamped to [0,1] and quantized to 0..255.
std::string encode_pgm(const Frame& frame);
Frame decode_pgm(const std::string& bytes);

void write_pgm(const std::filesystem::path& path, const Frame& frame);
Frame read_pgm(const std::filesystem::path& path);

/// One row per image row, comma-separated, round-trip precision.
std::string frame_to_csv(const Frame& frame);

} // namespace liquid
