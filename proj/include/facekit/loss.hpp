#pragma once

#include <algorithm>

#include "facekit/embedding.hpp"
#include "facekit/errors.hpp"

namespace facekit {

struct ContrastiveResult {
    double loss = 0.0;
    Embedding grad_a;
    Embedding grad_b;
};

// Margin contrastive loss over an embedding pair:
//     d = ||a - b||
//     loss = (1 - y) * d^2 + y * max(0, m - d)^2,   y = dissimilar
//
// Similar pairs are pulled together quadratically; dissimilar pairs are
// pushed until they clear the margin. The d = 0 point of the hinge term is
// non-differentiable; its gradient is defined as 0 below 1e-12.
inline ContrastiveResult contrastive_loss(const Embedding& a, const Embedding& b, int dissimilar,
                                          double margin) {
    if (!(margin > 0.0)) throw TrainingError("contrastive_loss: margin must be > 0");
    if (dissimilar != 0 && dissimilar != 1)
        throw TrainingError("contrastive_loss: dissimilar flag must be 0 or 1");
    ContrastiveResult r;
    const double d = euclidean_distance(a, b);
    if (dissimilar == 0) {
        r.loss = d * d;
        for (int i = 0; i < kEmbeddingDim; ++i) {
            const float g = 2.0f * (a[i] - b[i]);
            r.grad_a[i] = g;
            r.grad_b[i] = -g;
        }
        return r;
    }
    if (d >= margin) return r;  // hinge inactive: zero loss, zero gradient
    const double gap = margin - d;
    r.loss = gap * gap;
    if (d < 1e-12) return r;  // singular point, gradient defined as 0
    const double scale = -2.0 * gap / d;
    for (int i = 0; i < kEmbeddingDim; ++i) {
        const float g = static_cast<float>(scale * (a[i] - b[i]));
        r.grad_a[i] = g;
        r.grad_b[i] = -g;
    }
    return r;
}

}  // namespace facekit
