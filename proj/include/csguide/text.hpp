#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace csguide::text {

/// Removes C0/C1 control characters (keeping '\n') and zero-width / format
/// code points (U+200B..U+200F, U+2060, U+FEFF, U+00AD). Invalid UTF-8 bytes
/// are dropped.
std::string strip_invisible(std::string_view in);

std::string trim(std::string_view in);
std::string to_lower(std::string_view in);
std::vector<std::string> split(std::string_view in, char delimiter);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Escapes backslash, tab, newline and carriage return so a value fits in one
/// delimiter-separated cell.
std::string escape_cell(std::string_view in);
std::string unescape_cell(std::string_view in);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

/// Shortest decimal representation that round-trips exactly.
std::string format_double(double v);
double parse_double(std::string_view s);

}  // namespace csguide::text
