#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <utility>

namespace dpn {

/// splitmix64 step. Used to expand a 64-bit seed into generator state and to
/// derive independent substreams.
constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// xoshiro256** generator (Blackman & Vigna), state seeded by four successive
/// splitmix64 outputs of the seed. Only integer arithmetic and an exact
/// 53-bit conversion are used, so the stream is identical on every platform.
class Prng {
public:
    explicit Prng(std::uint64_t seed = 0) noexcept { reseed(seed); }

    void reseed(std::uint64_t seed) noexcept {
        std::uint64_t sm = seed;
        for (auto& s : state_) s = splitmix64(sm);
    }

    /// Independent generator for item `index` of a run seeded with `seed`
    /// (per-case dataset streams, per-epoch shuffles).
    static Prng substream(std::uint64_t seed, std::uint64_t index) noexcept {
        std::uint64_t sm = seed ^ (0xD1B54A32D192ED03ULL * (index + 1));
        return Prng(splitmix64(sm));
    }

    std::uint64_t next() noexcept {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0, 1): top 53 bits scaled by 2^-53.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    // Uniform integer on [0, n) by rejection sampling.
    std::uint64_t below(std::uint64_t n) noexcept {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t r;
        do {
            r = next();
        } while (r >= limit);
        return r % n;
    }

    const std::array<std::uint64_t, 4>& state() const noexcept { return state_; }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

    std::array<std::uint64_t, 4> state_{};
};

// Fisher-Yates shuffle driven by Prng::below.
template <class Container>
void shuffle(Container& items, Prng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace dpn
