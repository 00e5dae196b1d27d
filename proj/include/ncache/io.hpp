#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace ncache {

/// Writes `contents` to a sibling temp file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

/// 1-based line number of a byte offset within `text`.
std::size_t line_of_offset(std::string_view text, std::size_t offset);

}  // namespace ncache
