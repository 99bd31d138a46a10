#pragma once

#include <string>

namespace tadfkd {

// Shortest round-trip decimal form (std::to_chars); NaN prints "nan".
std::string fmt_double(double v);

// Fixed-precision form for table rendering.
std::string fmt_fixed(double v, int precision);

} // namespace tadfkd
