#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "reljoin/errors.hpp"

namespace reljoin {

/// Parses "123", "40MB", "0.13 MB", "2GB", "512KB", "7B" (decimal units) into bytes, rounded to nearest.
inline std::uint64_t parse_size(std::string_view text) {
  std::string s;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
  }
  std::size_t split = 0;
  while (split < s.size() && (std::isdigit(static_cast<unsigned char>(s[split])) || s[split] == '.')) ++split;
  if (split == 0) throw InvariantError("invalid size '" + std::string(text) + "'");
  double value = 0.0;
  try {
    std::size_t used = 0;
    value = std::stod(s.substr(0, split), &used);
    if (used != split) throw InvariantError("invalid size '" + std::string(text) + "'");
  } catch (const std::logic_error&) {
    throw InvariantError("invalid size '" + std::string(text) + "'");
  }
  std::string unit = s.substr(split);
  for (auto& c : unit) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  double scale = 1.0;
  if (unit.empty() || unit == "B") {
    scale = 1.0;
  } else if (unit == "KB" || unit == "K") {
    scale = 1e3;
  } else if (unit == "MB" || unit == "M") {
    scale = 1e6;
  } else if (unit == "GB" || unit == "G") {
    scale = 1e9;
  } else if (unit == "TB" || unit == "T") {
    scale = 1e12;
  } else {
    throw InvariantError("unknown size unit '" + unit + "' in '" + std::string(text) + "'");
  }
  const double bytes = std::round(value * scale);
  if (!std::isfinite(bytes) || bytes < 0 || bytes > 1.8e19) throw InvariantError("size out of range: " + std::string(text));
  return static_cast<std::uint64_t>(bytes);
}

// Human form with one decimal in the largest decimal unit not exceeding the value.
inline std::string format_size(double bytes) {
  const char* unit = "B";
  double v = bytes;
  if (std::fabs(bytes) >= 1e9) {
    v = bytes / 1e9;
    unit = "GB";
  } else if (std::fabs(bytes) >= 1e6) {
    v = bytes / 1e6;
    unit = "MB";
  } else if (std::fabs(bytes) >= 1e3) {
    v = bytes / 1e3;
    unit = "KB";
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f %s", v, unit);
  return buf;
}

}  // namespace reljoin
