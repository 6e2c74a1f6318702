#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>

#include "facekit/errors.hpp"

namespace facekit {

inline constexpr int kEmbeddingDim = 5;

// The face feature vector the whole system trades in.
struct Embedding {
    std::array<float, kEmbeddingDim> v{};

    float& operator[](int i) { return v[static_cast<std::size_t>(i)]; }
    float operator[](int i) const { return v[static_cast<std::size_t>(i)]; }

    bool operator==(const Embedding&) const = default;

    bool all_finite() const {
        for (float x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

inline double euclidean_distance(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size())
        throw DimensionError("euclidean_distance: dimension mismatch " +
                             std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return std::sqrt(acc);
}

inline double euclidean_distance(const Embedding& a, const Embedding& b) {
    return euclidean_distance(std::span<const float>(a.v), std::span<const float>(b.v));
}

}  // namespace facekit
