#pragma once

// Decimal formatting used by the dataset format. Per-segment reals are
// written at 9 significant digits; values are quantized through the same
// formatter at generation time so serialization is lossless by construction.

#include <cstdio>
#include <cstdlib>
#include <string>

namespace streamhl {

inline std::string fmt9(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

// Full-precision form for config headers (round-trips any double).
inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double quantize9(double x) {
  return std::strtod(fmt9(x).c_str(), nullptr);
}

}  // namespace streamhl
