#pragma once

#include <charconv>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace qens {

/// Invalid experiment/model configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (CLI exit code 3).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Request exceeds a resource cap, e.g. the simulator qubit limit (CLI exit code 4).
struct ResourceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent child seed for task `index` of a seeded computation.
/// Mixed rather than plain XOR so index 0 does not reuse the parent stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(seed ^ splitmix64(index + 1));
}

/// Runs fn(0..n-1) on up to `workers` threads. Results must be written to
/// per-index slots; the first exception is rethrown on the calling thread.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

/// Shortest decimal string that round-trips the double exactly.
inline std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace qens
