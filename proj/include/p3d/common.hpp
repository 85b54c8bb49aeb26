#pragma once

#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>

namespace p3d {

// Configuration misuse: bad shapes, bad hyperparameters, inconsistent wiring.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mathematical domain violation: degenerate pose, point outside image, j == r.
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed file contents. Carries the byte offset where parsing failed.
struct FormatError : std::runtime_error {
    size_t offset;
    FormatError(const std::string& msg, size_t off)
        : std::runtime_error(msg + " (byte offset " + std::to_string(off) + ")"), offset(off) {}
};

// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string strf(const char* fmt, ...) {
    va_list args;
    va_start(args, fmt);
    char buf[512];
    vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    return std::string(buf);
}

using Rng = std::mt19937_64;

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent deterministic stream from (seed, stream id).
inline Rng make_rng(uint64_t seed, uint64_t stream = 0) {
    return Rng(splitmix64(splitmix64(seed) ^ stream));
}

}  // namespace p3d
