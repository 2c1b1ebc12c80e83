#include "grainkit/rng.hpp"

#include "grainkit/digest.hpp"

#include <cmath>
#include <numbers>

namespace grainkit {

uint64_t KeyedRng::mix(uint64_t z) {
    // SplitMix64 finalizer.
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t KeyedRng::derive_key(uint64_t seed, std::string_view entity) {
    const Sha256 h = sha256(entity);
    uint64_t e = 0;
    for (int i = 0; i < 8; ++i) e = (e << 8) | h[i];
    return derive_key(seed, e);
}

uint64_t KeyedRng::derive_key(uint64_t seed, uint64_t entity) {
    return mix(mix(seed) ^ (entity + 0x632be59bd9b4e019ULL));
}

KeyedRng::KeyedRng(uint64_t seed, std::string_view entity) : key_(derive_key(seed, entity)) {}

uint64_t KeyedRng::next_u64() {
    const uint64_t c = counter_++;
    return mix(key_ ^ mix(c * 0xd1342543de82ef95ULL + 1));
}

double KeyedRng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

uint64_t KeyedRng::below(uint64_t n) {
    // Rejection sampling keeps the draw exactly uniform.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % n;
}

double KeyedRng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace grainkit
