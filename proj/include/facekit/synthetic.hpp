#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "facekit/image.hpp"
#include "facekit/rng.hpp"

namespace facekit {

// Deterministic stand-in for a face corpus, written in the same layout the
// loader expects: <dir>/s<k>/<i>.pgm, binary P5, 92x112.
//
// Each subject is a fixed arrangement of soft blobs over a shaded background
// (its "identity"); each shot re-renders it with a small global shift,
// per-blob jitter, amplitude wobble and sensor noise, mimicking pose and
// expression variation. Identities are far apart, shots of one identity are
// close — the structure a similarity objective needs.

struct SyntheticConfig {
    int subjects = 40;
    int images_per_subject = 10;
    int width = 92;
    int height = 112;
    std::uint32_t seed = 1;
};

namespace detail {

struct Blob {
    float cx, cy, sigma, amp;
};

inline float gaussian_noise(Rng& rng) {
    // Box-Muller on two uniforms
    float u1 = rng.next_float();
    if (u1 < 1e-12f) u1 = 1e-12f;
    const float u2 = rng.next_float();
    return std::sqrt(-2.0f * std::log(u1)) * std::cos(6.2831853f * u2);
}

}  // namespace detail

inline Image render_synthetic_face(const SyntheticConfig& cfg, int subject, int shot) {
    // one generator per subject for the identity, one per shot for the jitter
    Rng id_rng(cfg.seed * 1000003u + static_cast<std::uint32_t>(subject) * 7919u);
    Rng shot_rng(cfg.seed * 611953u + static_cast<std::uint32_t>(subject) * 104729u +
                 static_cast<std::uint32_t>(shot) * 31u + 17u);

    const float w = static_cast<float>(cfg.width), h = static_cast<float>(cfg.height);
    const float base = id_rng.next_uniform(0.35f, 0.6f);
    const float grad_x = id_rng.next_uniform(-0.15f, 0.15f);
    const float grad_y = id_rng.next_uniform(-0.15f, 0.15f);
    constexpr int kBlobs = 6;
    detail::Blob blobs[kBlobs];
    for (auto& bl : blobs) {
        bl.cx = id_rng.next_uniform(0.15f, 0.85f) * w;
        bl.cy = id_rng.next_uniform(0.15f, 0.85f) * h;
        bl.sigma = id_rng.next_uniform(4.0f, 13.0f);
        const float mag = id_rng.next_uniform(0.3f, 0.55f);
        bl.amp = id_rng.next_bool() ? mag : -mag;
    }

    const float dx = shot_rng.next_uniform(-3.0f, 3.0f);
    const float dy = shot_rng.next_uniform(-3.0f, 3.0f);
    float jx[kBlobs], jy[kBlobs], ja[kBlobs];
    for (int i = 0; i < kBlobs; ++i) {
        jx[i] = shot_rng.next_uniform(-1.5f, 1.5f);
        jy[i] = shot_rng.next_uniform(-1.5f, 1.5f);
        ja[i] = shot_rng.next_uniform(0.9f, 1.1f);
    }

    Image im = Image::filled(cfg.width, cfg.height, 0.0f);
    for (int y = 0; y < cfg.height; ++y) {
        for (int x = 0; x < cfg.width; ++x) {
            float v = base + grad_x * (x / w - 0.5f) + grad_y * (y / h - 0.5f);
            for (int i = 0; i < kBlobs; ++i) {
                const float ddx = x - (blobs[i].cx + dx + jx[i]);
                const float ddy = y - (blobs[i].cy + dy + jy[i]);
                const float s2 = 2.0f * blobs[i].sigma * blobs[i].sigma;
                v += blobs[i].amp * ja[i] * std::exp(-(ddx * ddx + ddy * ddy) / s2);
            }
            v += 0.02f * detail::gaussian_noise(shot_rng);
            im.at(y, x) = std::clamp(v, 0.0f, 1.0f);
        }
    }
    return im;
}

// Writes the corpus tree and returns the number of images written.
inline std::size_t write_synthetic_corpus(const std::string& dir, const SyntheticConfig& cfg) {
    namespace fs = std::filesystem;
    std::size_t written = 0;
    for (int s = 1; s <= cfg.subjects; ++s) {
        const fs::path sdir = fs::path(dir) / ("s" + std::to_string(s));
        fs::create_directories(sdir);
        for (int i = 1; i <= cfg.images_per_subject; ++i) {
            const Image im = render_synthetic_face(cfg, s, i);
            save_pgm(im, (sdir / (std::to_string(i) + ".pgm")).string());
            ++written;
        }
    }
    return written;
}

}  // namespace facekit
