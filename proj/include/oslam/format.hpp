#pragma once

#include <cmath>
#include <cstdio>
#include <string>

#include "oslam/errors.hpp"

namespace oslam {

/// Fixed numeric formatting used by every exported artifact: 9
/// significant digits, shortest form. A value printed at 9 digits and
/// re-parsed prints to the same bytes, which makes file round trips
/// stable.
inline std::string g9(double v) {
  if (!std::isfinite(v)) throw IoFailure("non-finite value in export");
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace oslam
