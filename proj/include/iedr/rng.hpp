#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace iedr {

namespace detail {

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

} // namespace detail

/// One seeded generator stream. Streams are derived from a root seed plus a
/// name so that consumers (init, dropout, sampling, ...) never perturb each
/// other when one of them is toggled on or off.
class RngStream {
public:
    RngStream() : gen_(0) {}
    RngStream(std::uint64_t root_seed, std::string_view name)
        : gen_(detail::splitmix64(root_seed ^ detail::fnv1a64(name))) {}

    std::mt19937_64& gen() { return gen_; }

    double uniform(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(gen_);
    }

    double gauss(double mean = 0.0, double stddev = 1.0) {
        std::normal_distribution<double> d(mean, stddev);
        return d(gen_);
    }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        std::uniform_int_distribution<std::size_t> d(0, n - 1);
        return d(gen_);
    }

    bool coin() { return index(2) == 1; }

private:
    std::mt19937_64 gen_;
};

/// Derives a deterministic per-key seed, e.g. for per-instance evaluation
/// streams that must not depend on processing order.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view name, std::uint64_t key = 0) {
    return detail::splitmix64(root ^ detail::fnv1a64(name) ^ detail::splitmix64(key));
}

} // namespace iedr
