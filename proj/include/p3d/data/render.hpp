#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "p3d/common.hpp"
#include "p3d/data/image.hpp"
#include "p3d/pose/joints.hpp"
#include "p3d/pose/types.hpp"

namespace p3d::data {

using pose::Pose2D;
using pose::Vec2;

inline constexpr int kNumBones = pose::kNumJoints - 1;

// Bone b connects kJointParent[b+1] -> b+1.
inline std::pair<int, int> bone_joints(int b) {
    return {pose::kJointParent[b + 1], b + 1};
}

struct RenderStyle {
    std::array<uint8_t, 3> bg_base{};
    std::array<double, 3> bg_grad_y{};  // per-channel vertical gradient, full-height delta
    std::array<double, 3> bg_grad_x{};
    double noise_amp = 8.0;
    std::array<std::array<uint8_t, 3>, kNumBones> bone_color{};
    std::array<double, kNumBones> bone_width{};
};

// Limb colors are pushed away from the background so the figure never
// dissolves into it.
inline RenderStyle sample_style(Rng& rng) {
    RenderStyle st;
    std::uniform_int_distribution<int> base(40, 215);
    std::uniform_real_distribution<double> grad(-40.0, 40.0);
    std::uniform_real_distribution<double> noise(4.0, 18.0);
    std::uniform_int_distribution<int> color(0, 255);
    std::uniform_real_distribution<double> width(2.0, 3.6);
    for (int c = 0; c < 3; ++c) {
        st.bg_base[c] = static_cast<uint8_t>(base(rng));
        st.bg_grad_y[c] = grad(rng);
        st.bg_grad_x[c] = grad(rng);
    }
    st.noise_amp = noise(rng);
    for (int b = 0; b < kNumBones; ++b) {
        std::array<int, 3> c{color(rng), color(rng), color(rng)};
        int dist = 0;
        for (int i = 0; i < 3; ++i) dist += std::abs(c[i] - st.bg_base[i]);
        if (dist < 150)
            for (int i = 0; i < 3; ++i) c[i] = 255 - c[i];
        for (int i = 0; i < 3; ++i) st.bone_color[b][i] = static_cast<uint8_t>(c[i]);
        st.bone_width[b] = width(rng);
    }
    return st;
}

namespace detail {

inline double dist_to_segment(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const double len2 = ab.x * ab.x + ab.y * ab.y;
    if (len2 < 1e-12) return (p - a).norm();
    double t = ((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2;
    t = std::clamp(t, 0.0, 1.0);
    const Vec2 q{a.x + t * ab.x, a.y + t * ab.y};
    return (p - q).norm();
}

}  // namespace detail

// Anti-aliased coverage of bone b at each pixel center, in [0, 1].
inline std::vector<double> bone_coverage(const Pose2D& pose2d, int size, int b,
                                         double width) {
    std::vector<double> cov(static_cast<size_t>(size) * size, 0.0);
    auto [ja, jb] = bone_joints(b);
    const Vec2 a = pose2d[ja], e = pose2d[jb];
    const double reach = width / 2.0 + 1.0;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, e.x) - reach)));
    const int x1 = std::min(size - 1, static_cast<int>(std::ceil(std::max(a.x, e.x) + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, e.y) - reach)));
    const int y1 = std::min(size - 1, static_cast<int>(std::ceil(std::max(a.y, e.y) + reach)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double d = detail::dist_to_segment({x + 0.5, y + 0.5}, a, e);
            const double alpha = std::clamp(width / 2.0 + 0.5 - d, 0.0, 1.0);
            if (alpha > 0.0) cov[static_cast<size_t>(y) * size + x] = alpha;
        }
    return cov;
}

inline Image render(const Pose2D& pose2d, int size, const RenderStyle& style,
                    uint64_t noise_seed) {
    for (int j = 0; j < pose::kNumJoints; ++j) {
        if (pose2d[j].x < 0.0 || pose2d[j].x >= size || pose2d[j].y < 0.0 ||
            pose2d[j].y >= size)
            throw DomainError(strf("render: joint %d at (%.1f, %.1f) outside %dx%d canvas",
                                   j, pose2d[j].x, pose2d[j].y, size, size));
    }
    Image img(size, size);
    Rng noise_rng = make_rng(noise_seed, 0x6e6f6973);
    std::uniform_real_distribution<double> noise(-style.noise_amp, style.noise_amp);
    for (int y = 0; y < size; ++y) {
        const double fy = static_cast<double>(y) / size - 0.5;
        for (int x = 0; x < size; ++x) {
            const double fx = static_cast<double>(x) / size - 0.5;
            uint8_t* p = img.px(y, x);
            for (int c = 0; c < 3; ++c) {
                double v = style.bg_base[c] + style.bg_grad_y[c] * fy +
                           style.bg_grad_x[c] * fx + noise(noise_rng);
                p[c] = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
            }
        }
    }
    for (int b = 0; b < kNumBones; ++b) {
        auto cov = bone_coverage(pose2d, size, b, style.bone_width[b]);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double alpha = cov[static_cast<size_t>(y) * size + x];
                if (alpha <= 0.0) continue;
                uint8_t* p = img.px(y, x);
                for (int c = 0; c < 3; ++c) {
                    double v = alpha * style.bone_color[b][c] + (1.0 - alpha) * p[c];
                    p[c] = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
                }
            }
    }
    return img;
}

// Style and noise both derived from one seed.
inline Image render(const Pose2D& pose2d, int size, uint64_t style_seed) {
    Rng style_rng = make_rng(style_seed, 0x7374796c);
    return render(pose2d, size, sample_style(style_rng), style_seed);
}

}  // namespace p3d::data
