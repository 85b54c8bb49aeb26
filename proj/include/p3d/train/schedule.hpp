#pragma once

#include <cmath>
#include <cstdint>

#include "p3d/common.hpp"
#include "p3d/pose/types.hpp"

namespace p3d::train {

// Optimization hyperparameters. Epoch indices are 0-based: the learning rate
// halves every lr_half_period epochs and lambda_2d drops at the start of
// epoch lambda2d_drop_epoch.
struct TrainConfig {
    int epochs = 28;
    int batch = 32;
    double lr0 = 0.01;
    int lr_half_period = 4;
    double momentum = 0.9;
    double weight_decay = 0.001;
    double lambda2d_hi = 0.1;
    double lambda2d_lo = 0.01;
    int lambda2d_drop_epoch = 16;
    double lambda3d = 0.5;
    uint64_t seed = 1;
    int eval_period = 4;
    int log_period = 50;

    void validate() const {
        if (epochs <= 0) throw ConfigError("train config: epochs must be positive");
        if (batch < 2) throw ConfigError("train config: batch must be at least 2");
        if (lr0 < 0.0) throw ConfigError("train config: lr0 must be non-negative");
        if (lr_half_period <= 0)
            throw ConfigError("train config: lr_half_period must be positive");
        if (momentum < 0.0 || momentum >= 1.0)
            throw ConfigError("train config: momentum outside [0, 1)");
        if (weight_decay < 0.0)
            throw ConfigError("train config: weight_decay must not be negative");
        if (lambda2d_hi <= 0.0 || lambda2d_lo <= 0.0 || lambda3d <= 0.0)
            throw ConfigError("train config: loss weights must be positive");
        if (lambda2d_drop_epoch < 0 || lambda2d_drop_epoch >= epochs)
            throw ConfigError(strf("train config: lambda2d_drop_epoch %d outside [0, %d)",
                                   lambda2d_drop_epoch, epochs));
        if (eval_period <= 0) throw ConfigError("train config: eval_period must be positive");
        if (log_period <= 0) throw ConfigError("train config: log_period must be positive");
    }
};

inline double lr_at(int epoch, const TrainConfig& c) {
    if (epoch < 0 || epoch >= c.epochs)
        throw ConfigError(strf("lr_at: epoch %d outside [0, %d)", epoch, c.epochs));
    return c.lr0 * std::pow(0.5, epoch / c.lr_half_period);
}

inline pose::LossWeights lambdas_at(int epoch, const TrainConfig& c) {
    if (epoch < 0 || epoch >= c.epochs)
        throw ConfigError(strf("lambdas_at: epoch %d outside [0, %d)", epoch, c.epochs));
    return pose::LossWeights(epoch < c.lambda2d_drop_epoch ? c.lambda2d_hi : c.lambda2d_lo,
                             c.lambda3d);
}

}  // namespace p3d::train
