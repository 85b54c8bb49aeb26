#pragma once

#include <string>
#include <vector>

#include "p3d/common.hpp"
#include "p3d/nn/tensor.hpp"

namespace p3d::nn {

// A named leaf tensor with its momentum buffer. Biases and batchnorm
// scale/shift are exempt from weight decay.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> tensor;
    std::vector<T> momentum;
    bool decay_exempt = false;

    Parameter() = default;
    Parameter(std::string name_, Tensor<T> t, bool exempt = false)
        : name(std::move(name_)), tensor(std::move(t)),
          momentum(tensor.size(), T(0)), decay_exempt(exempt) {}
};

// g' = g + wd*w (skipped when exempt); v <- momentum*v + g'; w <- w - lr*v
// lr == 0 leaves weights and momentum buffers untouched.
template <typename T>
void sgd_step(std::vector<Parameter<T>>& params, T lr, T momentum = T(0.9),
              T weight_decay = T(0.001)) {
    for (auto& p : params) {
        if (!p.tensor.grad_ready())
            throw ConfigError(strf("sgd_step: parameter '%s' has no gradient",
                                   p.name.c_str()));
        if (lr == T(0)) continue;
        auto w = p.tensor.values();
        auto g = p.tensor.grad();
        for (size_t i = 0; i < w.size(); ++i) {
            T gi = g[i];
            if (!p.decay_exempt) gi += weight_decay * w[i];
            p.momentum[i] = momentum * p.momentum[i] + gi;
            w[i] -= lr * p.momentum[i];
        }
    }
}

template <typename T>
void zero_grads(std::vector<Parameter<T>>& params) {
    for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace p3d::nn
