#pragma once

#include <cstdint>
#include <string_view>

namespace grainkit {

/// Counter-based generator: the i-th draw is a pure function of (key, i), so
/// results never depend on call order or thread scheduling.
class KeyedRng {
  public:
    explicit KeyedRng(uint64_t key) : key_(key) {}
    /// Key derived from a seed and an entity digest (e.g. a prompt digest).
    KeyedRng(uint64_t seed, std::string_view entity);

    static uint64_t mix(uint64_t z);
    static uint64_t derive_key(uint64_t seed, std::string_view entity);
    static uint64_t derive_key(uint64_t seed, uint64_t entity);

    uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n); n > 0.
    uint64_t below(uint64_t n);
    double normal();
    bool bernoulli(double p) { return uniform() < p; }

    uint64_t counter() const { return counter_; }

  private:
    uint64_t key_;
    uint64_t counter_ = 0;
};

} // namespace grainkit
