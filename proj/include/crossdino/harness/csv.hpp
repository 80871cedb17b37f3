#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace crossdino::harness {

/// Fixed-point formatting with a given number of decimals ("-0.0000" is
/// printed as "0.0000").
inline std::string fixed(double v, int decimals = 6) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    std::string s = buf;
    if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

inline std::string scientific(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6e", v);
    return buf;
}

} // namespace crossdino::harness
