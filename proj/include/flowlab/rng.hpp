#pragma once

#include <cstdint>
#include <string_view>

#include "flowlab/array.hpp"

namespace flowlab {

// Counter-based generator: the i-th output is a pure function of (seed, i),
// so independent subsystems can draw from disjoint counter ranges or from
// streams split off by label without touching each other's state.
struct RngState {
    std::uint64_t seed = 0;
    std::uint64_t counter = 0;

    RngState() = default;
    explicit RngState(std::uint64_t s, std::uint64_t c = 0) : seed(s), counter(c) {}

    // splitmix64 finalizer applied to a per-index state
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() {
        std::uint64_t v = mix(seed ^ mix(counter));
        ++counter;
        return v;
    }

    // uniform on (0, 1]: never returns 0, so log() is safe
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1p-53;
    }

    // Box-Muller; one draw consumes two counter slots (the sine branch is
    // discarded to keep the counter arithmetic trivial)
    double next_gaussian() {
        double u1 = next_uniform();
        double u2 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // independent stream derived from a fixed label; counter starts at 0
    RngState split(std::string_view label) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64
        for (char c : label) {
            h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
            h *= 0x100000001b3ULL;
        }
        return RngState(mix(seed ^ h));
    }
};

// n i.i.d. standard normal draws; counter advances by 2n
inline Array gaussian(RngState& rng, std::size_t n) {
    Array out(n);
    for (std::size_t i = 0; i < n; ++i) out.data[i] = rng.next_gaussian();
    return out;
}

}  // namespace flowlab
