#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "pexplore/grid_world.hpp"
#include "pexplore/point_env.hpp"

namespace pexplore {

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string to_text(int v) { return std::to_string(v); }
inline std::string to_text(const GridState& s) {
  return std::to_string(s.x) + ":" + std::to_string(s.y);
}
inline std::string to_text(const std::vector<double>& v) {
  std::string out;
  for (double x : v) {
    if (!out.empty()) out += ':';
    out += format_double(x);
  }
  return out;
}
inline std::string to_text(const ContState& s) { return to_text(s.coords); }

}  // namespace pexplore
