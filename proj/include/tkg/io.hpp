#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace tkg {

// Writes to `<path>.tmp` and renames over `path`, creating parent
// directories. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Throws IoError.
std::string read_file(const std::filesystem::path& path);

}  // namespace tkg
