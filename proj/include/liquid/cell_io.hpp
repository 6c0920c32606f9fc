#pragma once

// JSON parameter documents:
//   {"format_version":1,"kind":"LRC_SA","m":19,"n":64,"dt":1,
//    "arrays":{"g_l":[...],"e_l":[...],...}}
// Arrays are flat, row-major, and printed with 17 significant digits.

#include <filesystem>
#include <string>

#include "json.hpp"
#include "liquid/cells.hpp"

namespace liquid {

inline constexpr int kFormatVersion = 1;

std::string cell_to_json(const CellParameters& params);
CellParameters cell_from_json(const nlohmann::json& doc);
CellParameters cell_from_json(const std::string& text);

/// Atomic write (temp file + rename). Throws IoError.
void write_text_file(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

} // namespace liquid
