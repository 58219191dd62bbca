#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace onlstm::io {

// Writes to a sibling temporary file and renames it over `path`, so readers
// never observe a partially written file.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

// Whole file as bytes. Throws DataError naming the path if it cannot be read.
std::string read_file(const std::filesystem::path& path);

// Lines without their terminators. A trailing newline does not add an empty
// last line.
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace onlstm::io
