#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>

namespace quadmix {

// All randomness in the pipeline flows through splitmix64 so that runs are
// reproducible bit-for-bit across compilers and standard libraries. Standard
// <random> distributions are implementation-defined and must not be used.

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64_append(std::uint64_t h, std::string_view bytes) noexcept {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Derives an independent stream seed from a base seed and a stream index/tag.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag) noexcept {
    return splitmix64(splitmix64(seed) ^ fnv1a64(tag));
}

// Top 53 bits -> [0, 1).
constexpr double u64_to_unit(std::uint64_t x) noexcept {
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

// One uniform draw per (seed, key), independent of evaluation order. Used to
// realize fractional sample counts so parallel runs agree with serial ones.
constexpr double keyed_uniform(std::uint64_t seed, std::uint64_t key_hash) noexcept {
    return u64_to_unit(splitmix64(splitmix64(seed) ^ key_hash));
}

inline double keyed_uniform(std::uint64_t seed, std::string_view key) noexcept {
    return keyed_uniform(seed, fnv1a64(key));
}

// Sequential splitmix64 stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next_u64() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    // Uniform in [0, 1).
    double next_double() noexcept { return u64_to_unit(next_u64()); }

    // Uniform in [0, n), unbiased via rejection.
    std::uint64_t next_below(std::uint64_t n) noexcept {
        if (n <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller, one spare cached.
    double next_normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Fisher-Yates; deterministic for a fixed seed.
    template <typename T>
    void shuffle(std::span<T> items) noexcept {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace quadmix
