#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <vector>

#include "facekit/image.hpp"
#include "facekit/model.hpp"

namespace facekit {

// A face found in a frame: where it sat, a process-unique id, and the crop
// already preprocessed to the model's input size.
struct DetectedFace {
    int x = 0, y = 0, width = 0, height = 0;
    std::string face_uid;
    FaceImage face;
};

inline constexpr int kMinFrameSide = 32;

class FaceDetector {
public:
    virtual ~FaceDetector() = default;

    // Empty result is the no-face path; frames below the minimum size carry
    // no face by definition.
    virtual std::vector<DetectedFace> detect(const Image& frame) = 0;
};

// Default detector: treats the whole frame as one face when there is enough
// pixel variation to plausibly contain one. Near-uniform frames (covered
// lens, blank wall) yield nothing and get discarded downstream. A real
// detector slots in behind the same interface.
class VarianceGateDetector : public FaceDetector {
public:
    explicit VarianceGateDetector(float stddev_threshold = 0.02f)
        : threshold_(stddev_threshold) {}

    std::vector<DetectedFace> detect(const Image& frame) override {
        if (frame.width < kMinFrameSide || frame.height < kMinFrameSide) return {};
        if (image_stddev(frame) <= threshold_) return {};
        DetectedFace f;
        f.x = 0;
        f.y = 0;
        f.width = frame.width;
        f.height = frame.height;
        f.face_uid = "face-" + std::to_string(next_uid_.fetch_add(1, std::memory_order_relaxed));
        f.face = face_image_from_raster(frame, f.face_uid);
        return {f};
    }

private:
    float threshold_;
    // unique across all detectors in the process
    static inline std::atomic<std::uint64_t> next_uid_{1};
};

}  // namespace facekit
