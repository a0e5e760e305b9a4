#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "oodrl/frame.hpp"

namespace oodrl::io {

// Writes to a sibling temp file and renames it over `path`, so readers never
// observe a partially written file. Parent directories are created.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

// Minimal CSV row reader for the files this project writes (no quoting).
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

// Binary PGM (P5, maxval 255). Pixels are clamped to [0, 1] and rounded.
std::string encode_pgm(const Frame& image);
Frame decode_pgm(std::string_view bytes);

}  // namespace oodrl::io
