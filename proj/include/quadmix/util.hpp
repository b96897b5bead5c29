#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace quadmix {

// Neumaier compensated sum. Corpus-scale totals of per-document doubles lose
// precision when accumulated naively; partial sums are merged in a fixed
// block order so results do not depend on thread count.
struct CompensatedSum {
    double sum = 0.0;
    double comp = 0.0;

    void add(double v) noexcept {
        const double t = sum + v;
        if (std::abs(sum) >= std::abs(v)) {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }

    void merge(const CompensatedSum& other) noexcept {
        add(other.sum);
        add(other.comp);
    }

    double value() const noexcept { return sum + comp; }
};

// Shortest round-trip decimal form of a double ("0.1", not "0.10000000000000001").
inline void append_double(std::string& out, double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

inline std::string double_to_string(double v) {
    std::string s;
    append_double(s, v);
    return s;
}

inline std::string hex_u64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf, 16);
}

inline void warn(std::string_view msg) {
    static std::mutex m;
    std::lock_guard<std::mutex> lock(m);
    std::cerr << "warning: " << msg << "\n";
}

}  // namespace quadmix
