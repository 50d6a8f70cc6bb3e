#include "graspred/numeric.hpp"

#include <charconv>
#include <cstdio>

namespace graspred {

std::string format_sig9(double v) {
  if (v == 0.0) return "0";  // collapses -0
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string format_exact(double v) {
  if (v == 0.0 && !std::signbit(v)) return "0";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace graspred
