#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ferfusion {

// Writes to a sibling temp file, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

// Splits one CSV line on commas; no quoting support.
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace ferfusion
