// Independent brute-force reference implementations used by the tests.
// These deliberately avoid the library's compute paths (im2col, window
// bookkeeping, neighborhood pruning) so they can serve as oracles.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "p3d/common.hpp"
#include "p3d/pose/types.hpp"

namespace oracle {

// Quadruple-loop convolution over [B,C,H,W].
inline std::vector<double> conv2d(const std::vector<double>& x, int bsz, int c, int h,
                                  int w, const std::vector<double>& wt, int f, int kh,
                                  int kw, const std::vector<double>& bias, int stride,
                                  int pad, int& oh, int& ow) {
    oh = (h + 2 * pad - kh) / stride + 1;
    ow = (w + 2 * pad - kw) / stride + 1;
    std::vector<double> out(static_cast<size_t>(bsz) * f * oh * ow, 0.0);
    for (int n = 0; n < bsz; ++n)
        for (int ff = 0; ff < f; ++ff)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = bias[ff];
                    for (int ch = 0; ch < c; ++ch)
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                int iy = oy * stride - pad + ky;
                                int ix = ox * stride - pad + kx;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                acc += x[((static_cast<size_t>(n) * c + ch) * h + iy) * w + ix] *
                                       wt[((static_cast<size_t>(ff) * c + ch) * kh + ky) * kw + kx];
                            }
                    out[((static_cast<size_t>(n) * f + ff) * oh + oy) * ow + ox] = acc;
                }
    return out;
}

inline std::vector<double> maxpool(const std::vector<double>& x, int bsz, int c, int h,
                                   int w, int k, int stride, int& oh, int& ow) {
    oh = (h - k) / stride + 1;
    ow = (w - k) / stride + 1;
    std::vector<double> out(static_cast<size_t>(bsz) * c * oh * ow);
    for (int n = 0; n < bsz; ++n)
        for (int ch = 0; ch < c; ++ch)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double best = -1e300;
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            int iy = oy * stride + ky, ix = ox * stride + kx;
                            best = std::max(
                                best, x[((static_cast<size_t>(n) * c + ch) * h + iy) * w + ix]);
                        }
                    out[((static_cast<size_t>(n) * c + ch) * oh + oy) * ow + ox] = best;
                }
    return out;
}

// Direct evaluation of the soft-label formula over every grid cell.
inline p3d::pose::GridDistribution soft_label(const p3d::pose::Vec2& y,
                                              const p3d::pose::GridGeometry& geom) {
    p3d::pose::GridDistribution probs(geom.cells(), 0.0);
    const double clamp = 1e-6 * geom.w_g;
    double denom = 0.0;
    for (int i = 0; i < geom.cells(); ++i) {
        double d = (y - geom.center(i)).norm();
        bool indicator = d < geom.w_g;
        if (indicator) denom += 1.0 / std::max(d, clamp);
    }
    for (int i = 0; i < geom.cells(); ++i) {
        double d = (y - geom.center(i)).norm();
        if (d < geom.w_g) probs[i] = (1.0 / std::max(d, clamp)) / denom;
    }
    return probs;
}

inline std::vector<double> random_values(size_t n, p3d::Rng& rng, double lo = -1.0,
                                         double hi = 1.0) {
    std::uniform_real_distribution<double> uni(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = uni(rng);
    return v;
}

}  // namespace oracle
