#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace powtime::csv {

// Shortest round-trip decimal form; locale independent.
inline std::string number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc{}) return "nan";
  return std::string(buf, res.ptr);
}

// Fixed significant digits, for human-facing output.
inline std::string number(double v, int significant) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, significant);
  if (res.ec != std::errc{}) return "nan";
  return std::string(buf, res.ptr);
}

}  // namespace powtime::csv
