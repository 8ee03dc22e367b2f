#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace relagent {

std::string sha256_hex(std::string_view data);

/// Writes via a sibling temp file and rename so readers never see a partial
/// file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Throws Error(MissingFile) when the file cannot be opened.
std::string read_file(const std::filesystem::path& path);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

}  // namespace relagent
