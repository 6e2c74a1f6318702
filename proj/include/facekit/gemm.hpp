#pragma once

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

namespace facekit {

// Row-major single-precision matrix multiply, C[M,N] = A[M,K] * B[K,N]
// (or += when accumulate is set). Two schedules:
//
//  - stream_a: A is the large streamed operand (weights), B is k-blocked into
//    cache and every row of A sweeps over it. Used when M*K dominates.
//  - stream_b: A is small enough to stay cached; B and C are walked once in
//    column tiles. Used for activation-sized A with a huge N.
//
// Both schedules write each C element from exactly one thread in a fixed
// k-order, so results are bitwise reproducible for any thread count.
namespace detail {

inline void gemm_stream_a(const float* A, const float* B, float* C, int M, int N, int K,
                          bool accumulate) {
    if (!accumulate) {
        std::memset(C, 0, sizeof(float) * static_cast<std::size_t>(M) * N);
    }
    // B block of kb*N floats should sit in L2.
    const int kb_max = std::max(16, static_cast<int>((256 * 1024 / sizeof(float)) / std::max(N, 1)));
    for (int k0 = 0; k0 < K; k0 += kb_max) {
        const int k1 = std::min(K, k0 + kb_max);
#pragma omp parallel for schedule(static)
        for (int m = 0; m < M; ++m) {
            const float* a_row = A + static_cast<std::size_t>(m) * K;
            float* c_row = C + static_cast<std::size_t>(m) * N;
            int k = k0;
            // unroll by 4 over k; each step is an axpy across the full C row
            for (; k + 4 <= k1; k += 4) {
                const float a0 = a_row[k], a1 = a_row[k + 1], a2 = a_row[k + 2], a3 = a_row[k + 3];
                const float* b0 = B + static_cast<std::size_t>(k) * N;
                const float* b1 = b0 + N;
                const float* b2 = b1 + N;
                const float* b3 = b2 + N;
                for (int j = 0; j < N; ++j)
                    c_row[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
            for (; k < k1; ++k) {
                const float a = a_row[k];
                const float* b = B + static_cast<std::size_t>(k) * N;
                for (int j = 0; j < N; ++j) c_row[j] += a * b[j];
            }
        }
    }
}

inline void gemm_stream_b(const float* A, const float* B, float* C, int M, int N, int K,
                          bool accumulate) {
    // C tile of M*tw floats should sit in L2.
    int tw = static_cast<int>((256 * 1024 / sizeof(float)) / std::max(M, 1));
    tw = std::clamp(tw, 16, 4096);
#pragma omp parallel for schedule(static)
    for (int t0 = 0; t0 < N; t0 += tw) {
        const int t1 = std::min(N, t0 + tw);
        const int w = t1 - t0;
        if (!accumulate) {
            for (int m = 0; m < M; ++m)
                std::memset(C + static_cast<std::size_t>(m) * N + t0, 0, sizeof(float) * w);
        }
        for (int k = 0; k < K; ++k) {
            const float* b = B + static_cast<std::size_t>(k) * N + t0;
            for (int m = 0; m < M; ++m) {
                const float a = A[static_cast<std::size_t>(m) * K + k];
                float* c = C + static_cast<std::size_t>(m) * N + t0;
                for (int j = 0; j < w; ++j) c[j] += a * b[j];
            }
        }
    }
}

}  // namespace detail

inline void gemm(const float* A, const float* B, float* C, int M, int N, int K,
                 bool accumulate = false) {
    const std::size_t a_bytes = static_cast<std::size_t>(M) * K * sizeof(float);
    if (a_bytes > (1u << 20))
        detail::gemm_stream_a(A, B, C, M, N, K, accumulate);
    else
        detail::gemm_stream_b(A, B, C, M, N, K, accumulate);
}

// dst[cols,rows] = src[rows,cols]^T, 32x32 tiles.
inline void transpose(const float* src, float* dst, int rows, int cols) {
    constexpr int kTile = 32;
    for (int r0 = 0; r0 < rows; r0 += kTile) {
        const int r1 = std::min(rows, r0 + kTile);
        for (int c0 = 0; c0 < cols; c0 += kTile) {
            const int c1 = std::min(cols, c0 + kTile);
            for (int r = r0; r < r1; ++r)
                for (int c = c0; c < c1; ++c)
                    dst[static_cast<std::size_t>(c) * rows + r] =
                        src[static_cast<std::size_t>(r) * cols + c];
        }
    }
}

// Single-precision dot product with a fixed accumulation pattern.
inline float dot(const float* a, const float* b, int n) {
    float acc = 0.0f;
#pragma omp simd reduction(+ : acc)
    for (int i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

}  // namespace facekit
