#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace cadsketch {

/// Writes to a sibling temporary file, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

/// FNV-1a 64-bit over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes);

/// `git describe` string captured at configure time.
std::string_view build_version();

}  // namespace cadsketch
