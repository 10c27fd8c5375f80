#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace poseval {

// Shortest decimal text that parses back to exactly `value`. Infinities are
// written as "inf" / "-inf" and NaN as "nan".
std::string format_double(double value);

// Fixed-precision rendering for human-facing reports.
std::string format_fixed(double value, int digits);

// Strict parse of a complete token; std::nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

std::vector<std::string_view> split(std::string_view text, char delimiter);
// Splits on runs of ASCII whitespace, dropping empty tokens.
std::vector<std::string_view> split_whitespace(std::string_view text);
std::string_view trim(std::string_view text);

// Reads a whole file; throws Error(ParseError) if it cannot be opened.
std::string read_file(const std::filesystem::path& path);
// Writes atomically enough for our purposes (truncate + write).
void write_file(const std::filesystem::path& path, std::string_view contents);

// 64-bit FNV-1a, used for content-addressed caching and manifests.
class ContentHash {
 public:
  ContentHash& add(std::string_view bytes);
  ContentHash& add_file(const std::filesystem::path& path);
  std::uint64_t value() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace poseval
