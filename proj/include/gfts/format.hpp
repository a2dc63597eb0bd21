#pragma once

#include <charconv>
#include <string>

namespace gfts {

/// Shortest text that reads back to the same double; "NA" for missing values.
inline std::string format_double(double v) {
  if (v != v) return "NA";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace gfts
