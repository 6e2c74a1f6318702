#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "facekit/errors.hpp"
#include "facekit/tensor.hpp"

namespace facekit {

// SGD with classical momentum:
//     v <- momentum * v + grad
//     p <- p - lr * v
// Velocity buffers are keyed by parameter name and persist across steps.
class SgdOptimizer {
public:
    explicit SgdOptimizer(float lr = 0.005f, float momentum = 0.9f)
        : lr_(lr), momentum_(momentum) {}

    float lr() const { return lr_; }
    void set_lr(float lr) { lr_ = lr; }
    float momentum() const { return momentum_; }

    void step(std::vector<Param>& params) {
        for (auto& p : params) {
            if (!p.trainable) continue;
            Tensor& t = *p.value;
            if (!t.has_grad())
                throw TrainingError("sgd_step: parameter '" + p.name + "' has no gradient");
            auto& vel = velocity_[p.name];
            if (vel.size() != t.data.size()) vel.assign(t.data.size(), 0.0f);
            float* v = vel.data();
            float* w = t.data.data();
            const float* g = t.grad.data();
            const float lr = lr_, mom = momentum_;
            const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(t.data.size());
#pragma omp parallel for schedule(static)
            for (std::ptrdiff_t i = 0; i < n; ++i) {
                v[i] = mom * v[i] + g[i];
                w[i] -= lr * v[i];
            }
        }
    }

    void reset() { velocity_.clear(); }

private:
    float lr_;
    float momentum_;
    std::unordered_map<std::string, std::vector<float>> velocity_;
};

inline void sgd_step(std::vector<Param>& params, SgdOptimizer& opt) { opt.step(params); }

}  // namespace facekit
