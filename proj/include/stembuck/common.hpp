#pragma once

#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stembuck {

// Thrown when inputs violate a documented precondition.
class invalid_input : public std::runtime_error {
public:
    explicit invalid_input(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a computation cannot proceed (numerical failure, bad file, ...).
class computation_error : public std::runtime_error {
public:
    explicit computation_error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

inline std::string strfmt(const char* fmt, ...) {
    va_list args;
    va_start(args, fmt);
    va_list args2;
    va_copy(args2, args);
    const int n = std::vsnprintf(nullptr, 0, fmt, args);
    va_end(args);
    std::string out(n > 0 ? static_cast<size_t>(n) : 0, '\0');
    if (n > 0) std::vsnprintf(out.data(), out.size() + 1, fmt, args2);
    va_end(args2);
    return out;
}

inline std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        const size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string trim(std::string_view s) {
    size_t a = 0, b = s.size();
    while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r' || s[a] == '\n')) ++a;
    while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r' || s[b - 1] == '\n')) --b;
    return std::string(s.substr(a, b - a));
}

// Hexfloat formatting round-trips doubles bitwise through text.
inline std::string hex_double(double v) { return strfmt("%a", v); }

inline double parse_double(const std::string& s, const char* what) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || (end && *end != '\0')) {
        throw invalid_input(strfmt("cannot parse %s from '%s'", what, s.c_str()));
    }
    return v;
}

inline long parse_long(const std::string& s, const char* what) {
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (end == s.c_str() || (end && *end != '\0')) {
        throw invalid_input(strfmt("cannot parse %s from '%s'", what, s.c_str()));
    }
    return v;
}

}  // namespace detail
}  // namespace stembuck
