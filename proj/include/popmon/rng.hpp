#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace popmon {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Counter-based generator: output i of stream `key` is a pure function of
/// (key, i), so sub-streams can be derived for any unit of work and consumed
/// in any order or thread without changing results.
class StreamRng {
public:
    using result_type = std::uint64_t;

    constexpr explicit StreamRng(std::uint64_t key = 0) noexcept : key_(splitmix64(key)) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept { return splitmix64(key_ ^ splitmix64(counter_++)); }

    /// Uniform double in [0, 1).
    constexpr double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    constexpr std::uint64_t below(std::uint64_t n) noexcept {
        // modulo bias is negligible for n << 2^64
        return n == 0 ? 0 : (*this)() % n;
    }

    /// Independent child stream keyed by `salt`.
    constexpr StreamRng split(std::uint64_t salt) const noexcept {
        return StreamRng(splitmix64(key_ + 0x632be59bd9b4e019ULL) ^ splitmix64(salt));
    }

    constexpr std::uint64_t key() const noexcept { return key_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Folds several identifiers into one stream key.
inline constexpr std::uint64_t derive_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                          std::uint64_t c = 0) noexcept {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ (b + 0x9e3779b97f4a7c15ULL));
    h = splitmix64(h ^ (c + 0x3c6ef372fe94f82aULL));
    return h;
}

}  // namespace popmon
