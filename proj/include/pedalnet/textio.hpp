#pragma once

#include <cstdio>
#include <string>
#include <vector>

namespace pedalnet::textio {

// Shortest decimal form that round-trips through double.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) {
        // try to shorten
        for (int prec = 1; prec < 17; ++prec) {
            char s[40];
            std::snprintf(s, sizeof s, "%.*g", prec, v);
            double b2 = 0.0;
            std::sscanf(s, "%lf", &b2);
            if (b2 == v) return s;
        }
    }
    return buf;
}

inline std::string fmt_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::vector<std::string> split(const std::string& line, char sep);
std::vector<std::string> read_lines(const std::string& path);
std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& content);
double parse_double(const std::string& s);
long parse_long(const std::string& s);

}  // namespace pedalnet::textio
