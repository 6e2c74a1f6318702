#pragma once

#include <cstdint>
#include <random>

namespace facekit {

// Thin wrapper over std::mt19937 with hand-rolled draw helpers.
// std::mt19937 itself is fully specified by the standard; the distribution
// classes are not, so we avoid them to keep seeded runs reproducible.
class Rng {
public:
    explicit Rng(std::uint32_t seed) : gen_(seed) {}

    std::uint32_t next_u32() { return gen_(); }

    // Uniform in [0, 1) with 24 bits of mantissa.
    float next_float() { return static_cast<float>(gen_() >> 8) * (1.0f / 16777216.0f); }

    double next_double() { return static_cast<double>(gen_() >> 5) * (1.0 / 134217728.0); }

    // Uniform in [lo, hi).
    float next_uniform(float lo, float hi) { return lo + (hi - lo) * next_float(); }

    // Uniform integer in [0, n). n must be > 0.
    std::size_t next_index(std::size_t n) {
        // we only ever index containers far below 2^32
        return static_cast<std::size_t>(gen_() % static_cast<std::uint32_t>(n));
    }

    bool next_bool() { return (gen_() & 1u) != 0; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = next_index(i + 1);
            std::swap(v[i], v[j]);
        }
    }

private:
    std::mt19937 gen_;
};

}  // namespace facekit
