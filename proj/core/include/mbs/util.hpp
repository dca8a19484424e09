#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mbs {

template <class... A>
std::string msg(A&&... a) {
    std::ostringstream o;
    (o << ... << a);
    return o.str();
}

[[noreturn]] inline void fail(const std::string& m) { throw std::runtime_error(m); }

inline void require(bool cond, const std::string& m) {
    if (!cond) fail(m);
}

inline std::string shape_str(const std::vector<int>& s) {
    std::ostringstream o;
    o << "[";
    for (size_t i = 0; i < s.size(); ++i) o << (i ? "x" : "") << s[i];
    o << "]";
    return o.str();
}

}  // namespace mbs
