#pragma once

#include <stdexcept>
#include <string>

namespace facekit {

// Shape/size violations in tensor ops and the fixed network wiring.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input files (PGM, CSV, report files). Messages carry the path
// and, where it exists, the line number.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Bad checkpoint files: magic, header, shapes, truncation.
struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint with a good magic but a version this build does not read.
struct UnsupportedVersionError : CheckpointError {
    explicit UnsupportedVersionError(const std::string& what) : CheckpointError(what) {}
};

// Dataset-level problems: too few images per subject, impossible split.
struct DatasetError : std::runtime_error {
    explicit DatasetError(const std::string& what) : std::runtime_error(what) {}
};

struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

// Vector store: queries against an empty store, unreadable persistence files.
struct StoreError : std::runtime_error {
    explicit StoreError(const std::string& what) : std::runtime_error(what) {}
};

// Wire protocol: invalid JSON, unknown type, missing/mistyped fields.
struct ProtocolError : std::runtime_error {
    explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

// Socket-level failures after retries are exhausted.
struct ConnectionError : std::runtime_error {
    explicit ConnectionError(const std::string& what) : std::runtime_error(what) {}
};

// Mismatched frame dimensions in the motion gate.
struct FrameError : std::runtime_error {
    explicit FrameError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace facekit
