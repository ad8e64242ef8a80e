#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace camrf {

// Shortest text that reads back to the same double; locale independent,
// so CSV output is byte-stable across runs.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace camrf
