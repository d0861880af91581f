#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace famed {

/// Writes to "<path>.tmp.<pid>" and renames over `path`, so readers never
/// observe a partially written file.
void write_file_atomic(const std::string& path, std::string_view bytes);

std::vector<std::uint8_t> read_file(const std::string& path);

}  // namespace famed
