#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace kgv {

inline char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c + 32) : c; }

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);
std::vector<std::string_view> split_ws(std::string_view s);

/// tokens[first..last] joined by single spaces.
std::string join_tokens(const std::vector<std::string>& tokens, int first, int last);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::string ascii_lowercase(std::string_view s);

/// Unicode lowercase over UTF-8 input. Invalid bytes pass through unchanged.
std::string utf8_lowercase(std::string_view s);

/// Collapses every run of (Unicode) whitespace to one ASCII space and trims.
std::string collapse_whitespace(std::string_view s);

std::string sha256_hex(std::string_view data);

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string iso8601_now();

std::string read_file(const std::string& path);

}  // namespace kgv
