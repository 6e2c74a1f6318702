#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "facekit/embedding.hpp"
#include "facekit/errors.hpp"
#include "facekit/image.hpp"
#include "facekit/layers.hpp"
#include "facekit/rng.hpp"
#include "facekit/tensor.hpp"

namespace facekit {

inline constexpr int kFaceSide = 100;
inline constexpr int kFacePixels = kFaceSide * kFaceSide;

// Model input: a 100x100 grayscale face, pixels in [0,1]. Anything else must
// be resized by the caller before it reaches this layer.
struct FaceImage {
    std::vector<float> pixels;  // kFacePixels values
    std::string source_id;
};

inline FaceImage make_face_image(std::vector<float> pixels, std::string source_id = "") {
    if (pixels.size() != static_cast<std::size_t>(kFacePixels))
        throw DimensionError("face image must have exactly " + std::to_string(kFacePixels) +
                             " pixels, got " + std::to_string(pixels.size()));
    for (float p : pixels)
        if (!(p >= 0.0f && p <= 1.0f))
            throw DimensionError("face image pixels must lie in [0,1]");
    return FaceImage{std::move(pixels), std::move(source_id)};
}

inline FaceImage face_image_from_raster(const Image& im, std::string source_id = "") {
    const Image r = (im.width == kFaceSide && im.height == kFaceSide)
                        ? im
                        : bilinear_resize(im, kFaceSide, kFaceSide);
    return make_face_image(r.pixels, std::move(source_id));
}

// ---------------------------------------------------------------------------
// Network: three pad/conv/relu/batchnorm blocks (1 -> 4 -> 8 -> 8 channels,
// all 3x3 stride 1 with reflection padding so the 100x100 extent never
// shrinks), flattened to 80000, then 500 -> 500 -> 5 fully connected.
// ---------------------------------------------------------------------------

inline constexpr int kConv1Out = 4;
inline constexpr int kConv2Out = 8;
inline constexpr int kConv3Out = 8;
inline constexpr int kFlatDim = kConv3Out * kFacePixels;
inline constexpr int kFc1Out = 500;
inline constexpr int kFc2Out = 500;
static_assert(kFlatDim == 80000);

struct SiameseParams {
    Tensor conv1_w, conv1_b;
    BatchNormState bn1;
    Tensor conv2_w, conv2_b;
    BatchNormState bn2;
    Tensor conv3_w, conv3_b;
    BatchNormState bn3;
    Tensor fc1_w, fc1_b;
    Tensor fc2_w, fc2_b;
    Tensor fc3_w, fc3_b;

    SiameseParams()
        : conv1_w({kConv1Out, 1, 3, 3}),
          conv1_b({kConv1Out}),
          bn1(kConv1Out),
          conv2_w({kConv2Out, kConv1Out, 3, 3}),
          conv2_b({kConv2Out}),
          bn2(kConv2Out),
          conv3_w({kConv3Out, kConv2Out, 3, 3}),
          conv3_b({kConv3Out}),
          bn3(kConv3Out),
          fc1_w({kFc1Out, kFlatDim}),
          fc1_b({kFc1Out}),
          fc2_w({kFc2Out, kFc1Out}),
          fc2_b({kFc2Out}),
          fc3_w({kEmbeddingDim, kFc2Out}),
          fc3_b({kEmbeddingDim}) {}

    // Ordered list of trainable tensors. Running statistics are tracked
    // state, not parameters, and are handled by the checkpoint code.
    std::vector<Param> trainable_params() {
        return {
            {"conv1.weight", &conv1_w}, {"conv1.bias", &conv1_b},
            {"bn1.gamma", &bn1.gamma},  {"bn1.beta", &bn1.beta},
            {"conv2.weight", &conv2_w}, {"conv2.bias", &conv2_b},
            {"bn2.gamma", &bn2.gamma},  {"bn2.beta", &bn2.beta},
            {"conv3.weight", &conv3_w}, {"conv3.bias", &conv3_b},
            {"bn3.gamma", &bn3.gamma},  {"bn3.beta", &bn3.beta},
            {"fc1.weight", &fc1_w},     {"fc1.bias", &fc1_b},
            {"fc2.weight", &fc2_w},     {"fc2.bias", &fc2_b},
            {"fc3.weight", &fc3_w},     {"fc3.bias", &fc3_b},
        };
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (const auto& p : trainable_params()) n += p.value->numel();
        return n;
    }

    void set_mode(Mode m) { bn1.mode = bn2.mode = bn3.mode = m; }

    void zero_grads() {
        for (auto& p : trainable_params()) p.value->zero_grad();
    }
};

inline SiameseParams new_siamese(std::uint32_t seed) {
    SiameseParams p;
    Rng rng(seed);
    auto kaiming_uniform = [&rng](Tensor& w, int fan_in) {
        const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
        for (float& v : w.data) v = rng.next_uniform(-bound, bound);
    };
    kaiming_uniform(p.conv1_w, 1 * 9);
    kaiming_uniform(p.conv2_w, kConv1Out * 9);
    kaiming_uniform(p.conv3_w, kConv2Out * 9);
    kaiming_uniform(p.fc1_w, kFlatDim);
    kaiming_uniform(p.fc2_w, kFc1Out);
    kaiming_uniform(p.fc3_w, kFc2Out);
    return p;
}

// Activations saved by a train-mode forward for the matching backward.
struct ForwardCache {
    int batch = 0;
    Tensor pad1, r1;
    BatchNormCache bn1c;
    Tensor pad2, r2;
    BatchNormCache bn2c;
    Tensor pad3, r3;
    BatchNormCache bn3c;
    Tensor flat;  // [N, kFlatDim], fc1 input
    Tensor r4, r5;
};

inline Tensor stack_faces(const std::vector<FaceImage>& imgs) {
    if (imgs.empty()) throw DimensionError("forward: empty batch");
    Tensor x({static_cast<int>(imgs.size()), 1, kFaceSide, kFaceSide});
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        if (imgs[i].pixels.size() != static_cast<std::size_t>(kFacePixels))
            throw DimensionError("forward: face image " + std::to_string(i) +
                                 " is not " + std::to_string(kFaceSide) + "x" +
                                 std::to_string(kFaceSide));
        std::copy(imgs[i].pixels.begin(), imgs[i].pixels.end(),
                  x.data.begin() + static_cast<std::ptrdiff_t>(i) * kFacePixels);
    }
    return x;
}

namespace detail {

constexpr Pad4 kPad{1, 1, 1, 1};

inline Tensor reshape(Tensor t, std::vector<int> shape) {
    if (Tensor::checked_numel(shape) != t.numel())
        throw DimensionError("reshape: element count mismatch");
    t.shape = std::move(shape);
    return t;
}

}  // namespace detail

// Train-mode batched forward; fills `cache` for backward_train and updates
// batch-norm running statistics.
inline Tensor forward_train(SiameseParams& p, const Tensor& x, ForwardCache& cache) {
    require_shape(x, {x.shape[0], 1, kFaceSide, kFaceSide}, "forward_train input");
    p.set_mode(Mode::kTrain);
    cache.batch = x.shape[0];
    cache.pad1 = reflection_pad2d(x, detail::kPad);
    cache.r1 = relu(conv2d(cache.pad1, p.conv1_w, p.conv1_b));
    Tensor b1 = batchnorm2d(cache.r1, p.bn1, &cache.bn1c);
    cache.pad2 = reflection_pad2d(b1, detail::kPad);
    cache.r2 = relu(conv2d(cache.pad2, p.conv2_w, p.conv2_b));
    Tensor b2 = batchnorm2d(cache.r2, p.bn2, &cache.bn2c);
    cache.pad3 = reflection_pad2d(b2, detail::kPad);
    cache.r3 = relu(conv2d(cache.pad3, p.conv3_w, p.conv3_b));
    Tensor b3 = batchnorm2d(cache.r3, p.bn3, &cache.bn3c);
    cache.flat = detail::reshape(std::move(b3), {cache.batch, kFlatDim});
    cache.r4 = relu(linear(cache.flat, p.fc1_w, p.fc1_b));
    cache.r5 = relu(linear(cache.r4, p.fc2_w, p.fc2_b));
    return linear(cache.r5, p.fc3_w, p.fc3_b);
}

// Inference forward. Touches nothing in `p`: batch norm uses the running
// statistics and no cache is produced.
inline Tensor forward_infer(const SiameseParams& p, const Tensor& x) {
    require_shape(x, {x.shape[0], 1, kFaceSide, kFaceSide}, "forward_infer input");
    Tensor t = relu(conv2d(reflection_pad2d(x, detail::kPad), p.conv1_w, p.conv1_b));
    t = batchnorm2d_infer(t, p.bn1);
    t = relu(conv2d(reflection_pad2d(t, detail::kPad), p.conv2_w, p.conv2_b));
    t = batchnorm2d_infer(t, p.bn2);
    t = relu(conv2d(reflection_pad2d(t, detail::kPad), p.conv3_w, p.conv3_b));
    t = batchnorm2d_infer(t, p.bn3);
    t = detail::reshape(std::move(t), {x.shape[0], kFlatDim});
    t = relu(linear(t, p.fc1_w, p.fc1_b));
    t = relu(linear(t, p.fc2_w, p.fc2_b));
    return linear(t, p.fc3_w, p.fc3_b);
}

// Backward through the whole net. Accumulates parameter gradients; the
// gradient w.r.t. the input image is not materialized (nothing consumes it).
inline void backward_train(SiameseParams& p, const ForwardCache& cache, const Tensor& d_out) {
    require_shape(d_out, {cache.batch, kEmbeddingDim}, "backward_train gradient");
    Tensor d = linear_backward(cache.r5, p.fc3_w, p.fc3_b, d_out);
    d = relu_backward(cache.r5, d);
    d = linear_backward(cache.r4, p.fc2_w, p.fc2_b, d);
    d = relu_backward(cache.r4, d);
    d = linear_backward(cache.flat, p.fc1_w, p.fc1_b, d);
    d = detail::reshape(std::move(d), {cache.batch, kConv3Out, kFaceSide, kFaceSide});
    d = batchnorm2d_backward(d, p.bn3, cache.bn3c);
    d = relu_backward(cache.r3, d);
    d = conv2d_backward(cache.pad3, p.conv3_w, p.conv3_b, d);
    d = reflection_pad2d_backward(d, detail::kPad, cache.r2.shape);
    d = batchnorm2d_backward(d, p.bn2, cache.bn2c);
    d = relu_backward(cache.r2, d);
    d = conv2d_backward(cache.pad2, p.conv2_w, p.conv2_b, d);
    d = reflection_pad2d_backward(d, detail::kPad, cache.r1.shape);
    d = batchnorm2d_backward(d, p.bn1, cache.bn1c);
    d = relu_backward(cache.r1, d);
    conv2d_backward(cache.pad1, p.conv1_w, p.conv1_b, d);
}

inline Embedding embedding_from_row(const Tensor& out, int row) {
    Embedding e;
    for (int i = 0; i < kEmbeddingDim; ++i)
        e[i] = out.data[static_cast<std::size_t>(row) * kEmbeddingDim + i];
    return e;
}

// Map one face to its 5-d embedding (inference mode).
inline Embedding forward_once(const SiameseParams& p, const FaceImage& img) {
    const Tensor out = forward_infer(p, stack_faces({img}));
    return embedding_from_row(out, 0);
}

// Shared-weight pair forward. In train mode the two images run as one batch
// of 2, so batch-norm statistics span the pair; inference is equivalent to
// two forward_once calls.
inline std::pair<Embedding, Embedding> forward_pair(SiameseParams& p, const FaceImage& a,
                                                    const FaceImage& b, Mode mode) {
    const Tensor x = stack_faces({a, b});
    Tensor out;
    if (mode == Mode::kTrain) {
        ForwardCache cache;
        out = forward_train(p, x, cache);
    } else {
        out = forward_infer(p, x);
    }
    return {embedding_from_row(out, 0), embedding_from_row(out, 1)};
}

// Batched inference used by evaluation and the service worker pool. Works in
// chunks so activation memory stays bounded for large image lists.
inline std::vector<Embedding> embed_all(const SiameseParams& p,
                                        const std::vector<FaceImage>& imgs) {
    constexpr std::size_t kChunk = 32;
    std::vector<Embedding> es;
    es.reserve(imgs.size());
    for (std::size_t start = 0; start < imgs.size(); start += kChunk) {
        const std::size_t end = std::min(imgs.size(), start + kChunk);
        const std::vector<FaceImage> chunk(imgs.begin() + static_cast<std::ptrdiff_t>(start),
                                           imgs.begin() + static_cast<std::ptrdiff_t>(end));
        const Tensor out = forward_infer(p, stack_faces(chunk));
        for (std::size_t i = 0; i < chunk.size(); ++i)
            es.push_back(embedding_from_row(out, static_cast<int>(i)));
    }
    return es;
}

}  // namespace facekit
