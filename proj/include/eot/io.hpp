#pragma once

#include <filesystem>
#include <string>

namespace eot::io {

/// Writes to a sibling temp file, then renames over `path`. Creates parent
/// directories. Throws IoError with the path on failure.
void write_text_atomic(const std::filesystem::path& path, const std::string& contents);

std::string read_text(const std::filesystem::path& path);

}  // namespace eot::io

namespace eot::io {

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace eot::io
