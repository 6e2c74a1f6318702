#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "facekit/errors.hpp"

namespace facekit {

// Dense row-major float tensor. `grad` is empty until a backward pass (or
// ensure_grad) allocates it; when present it always has the same length as
// `data`.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;
    std::vector<float> grad;

    Tensor() = default;

    explicit Tensor(std::vector<int> s, float fill = 0.0f) : shape(std::move(s)) {
        data.assign(checked_numel(shape), fill);
    }

    static Tensor from(std::vector<int> s, std::vector<float> values) {
        Tensor t;
        t.shape = std::move(s);
        if (checked_numel(t.shape) != values.size())
            throw DimensionError("tensor data length " + std::to_string(values.size()) +
                                 " does not match shape product " +
                                 std::to_string(checked_numel(t.shape)));
        t.data = std::move(values);
        return t;
    }

    std::size_t numel() const { return data.size(); }

    int dim(std::size_t i) const { return shape.at(i); }

    bool has_grad() const { return !grad.empty(); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
    }

    void zero_grad() {
        if (has_grad()) std::fill(grad.begin(), grad.end(), 0.0f);
    }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static std::size_t checked_numel(const std::vector<int>& s) {
        if (s.empty()) throw DimensionError("tensor shape must not be empty");
        std::size_t n = 1;
        for (int d : s) {
            if (d <= 0) throw DimensionError("tensor dimensions must be positive");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }
};

// Named view of a trainable (or tracked) tensor inside a parameter set.
// Names are unique within one set.
struct Param {
    std::string name;
    Tensor* value = nullptr;
    bool trainable = true;
};

inline void require_shape(const Tensor& t, const std::vector<int>& expect,
                          const std::string& what) {
    if (t.shape != expect) {
        std::string got = "[", want = "[";
        for (std::size_t i = 0; i < t.shape.size(); ++i)
            got += (i ? "," : "") + std::to_string(t.shape[i]);
        for (std::size_t i = 0; i < expect.size(); ++i)
            want += (i ? "," : "") + std::to_string(expect[i]);
        throw DimensionError(what + ": expected shape " + want + "], got " + got + "]");
    }
}

}  // namespace facekit
