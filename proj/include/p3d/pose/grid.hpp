#pragma once

#include <algorithm>
#include <cmath>

#include "p3d/pose/types.hpp"

namespace p3d::pose {

// Soft grid-classification target: every cell whose center lies strictly
// within one grid width of the point gets probability proportional to the
// inverse distance. The distance is clamped below at 1e-6 * w_g so a point
// sitting exactly on a center stays finite.
inline GridDistribution soft_label(const Vec2& y2d, const GridGeometry& geom) {
    if (!(y2d.x >= 0.0 && y2d.x < geom.image_size && y2d.y >= 0.0 &&
          y2d.y < geom.image_size))
        throw DomainError(strf("soft_label: point (%g, %g) outside image of size %g",
                               y2d.x, y2d.y, geom.image_size));
    GridDistribution probs(geom.cells(), 0.0);
    const double clamp = 1e-6 * geom.w_g;
    double sum = 0.0;
    // only cells within one grid of the point can qualify
    int col0 = std::max(0, static_cast<int>(y2d.x / geom.w_g) - 1);
    int col1 = std::min(geom.n_g - 1, static_cast<int>(y2d.x / geom.w_g) + 1);
    int row0 = std::max(0, static_cast<int>(y2d.y / geom.w_g) - 1);
    int row1 = std::min(geom.n_g - 1, static_cast<int>(y2d.y / geom.w_g) + 1);
    for (int row = row0; row <= row1; ++row) {
        for (int col = col0; col <= col1; ++col) {
            int i = row * geom.n_g + col;
            double d = (y2d - geom.center(i)).norm();
            if (d < geom.w_g) {
                probs[i] = 1.0 / std::max(d, clamp);
                sum += probs[i];
            }
        }
    }
    for (double& p : probs) p /= sum;
    return probs;
}

// -sum_i target_i * log(pred_i), probabilities clipped below at 1e-12 in the log.
inline double cross_entropy_2d(const GridDistribution& pred, const GridDistribution& target) {
    if (pred.size() != target.size())
        throw ConfigError(strf("cross_entropy_2d: %zu cells vs %zu", pred.size(),
                               target.size()));
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (target[i] != 0.0) acc -= target[i] * std::log(std::max(pred[i], 1e-12));
    return acc;
}

}  // namespace p3d::pose
