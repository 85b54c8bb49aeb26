#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "p3d/common.hpp"
#include "p3d/data/image.hpp"
#include "p3d/pose/types.hpp"

namespace p3d::data {

using pose::Pose2D;

// Eigen decomposition of the training corpus' 3x3 RGB covariance.
struct RgbEigenpairs {
    bool valid = false;
    std::array<double, 3> eigenvalue{};
    std::array<std::array<double, 3>, 3> eigenvector{};  // [i] is the i-th eigenvector
};

namespace detail {

// Cyclic Jacobi for a symmetric 3x3 matrix.
inline void jacobi3(std::array<std::array<double, 3>, 3> a, std::array<double, 3>& eval,
                    std::array<std::array<double, 3>, 3>& evec) {
    std::array<std::array<double, 3>, 3> v{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    for (int sweep = 0; sweep < 50; ++sweep) {
        double off = std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
        if (off < 1e-15) break;
        for (int p = 0; p < 2; ++p)
            for (int q = p + 1; q < 3; ++q) {
                if (std::abs(a[p][q]) < 1e-18) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < 3; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < 3; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (int k = 0; k < 3; ++k) {
                    const double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
    }
    for (int i = 0; i < 3; ++i) {
        eval[i] = a[i][i];
        for (int k = 0; k < 3; ++k) evec[i][k] = v[k][i];  // columns are eigenvectors
    }
}

}  // namespace detail

inline RgbEigenpairs compute_rgb_pca(const std::vector<Image>& images) {
    if (images.empty()) throw ConfigError("rgb pca: no images");
    double mean[3] = {0, 0, 0};
    size_t count = 0;
    for (const auto& img : images) {
        const size_t px = img.data.size() / 3;
        for (size_t i = 0; i < px; ++i)
            for (int c = 0; c < 3; ++c) mean[c] += img.data[i * 3 + c];
        count += px;
    }
    for (double& m : mean) m /= static_cast<double>(count);

    std::array<std::array<double, 3>, 3> cov{};
    for (const auto& img : images) {
        const size_t px = img.data.size() / 3;
        for (size_t i = 0; i < px; ++i) {
            double d[3];
            for (int c = 0; c < 3; ++c) d[c] = img.data[i * 3 + c] - mean[c];
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) cov[r][c] += d[r] * d[c];
        }
    }
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) cov[r][c] /= static_cast<double>(count);

    RgbEigenpairs out;
    detail::jacobi3(cov, out.eigenvalue, out.eigenvector);
    for (double& ev : out.eigenvalue) ev = std::max(ev, 0.0);  // numerical floor
    out.valid = true;
    return out;
}

// One augmentation draw: sum_i alpha_i * lambda_i * e_i with alpha ~ N(0, 0.1).
inline std::array<double, 3> pca_offset(const RgbEigenpairs& pca, Rng& rng) {
    if (!pca.valid) throw ConfigError("pca augment: eigenpairs not computed");
    std::normal_distribution<double> gauss(0.0, 0.1);
    std::array<double, 3> off{};
    for (int i = 0; i < 3; ++i) {
        const double a = gauss(rng);
        for (int c = 0; c < 3; ++c) off[c] += a * pca.eigenvalue[i] * pca.eigenvector[i][c];
    }
    return off;
}

// Adds a single per-image color offset to every pixel, clamped to bytes.
inline Image pca_color_augment(const Image& img, const RgbEigenpairs& pca, Rng& rng) {
    const auto off = pca_offset(pca, rng);
    Image out = img;
    const size_t px = out.data.size() / 3;
    for (size_t i = 0; i < px; ++i)
        for (int c = 0; c < 3; ++c) {
            const double v = img.data[i * 3 + c] + off[c];
            out.data[i * 3 + c] = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
        }
    return out;
}

struct CropResult {
    Image image;
    Pose2D pose2d;
    int off_x = 0;
    int off_y = 0;
};

namespace detail {

inline bool joints_inside(const Pose2D& pose, int off_x, int off_y, int crop) {
    for (const auto& j : pose) {
        const double u = j.x - off_x, v = j.y - off_y;
        if (u < 0.0 || u >= crop || v < 0.0 || v >= crop) return false;
    }
    return true;
}

inline CropResult crop_at(const Image& img, const Pose2D& pose, int crop, int off_x,
                          int off_y) {
    CropResult res;
    res.image = Image(crop, crop);
    for (int y = 0; y < crop; ++y)
        std::copy(img.px(y + off_y, off_x), img.px(y + off_y, off_x) + crop * 3,
                  res.image.px(y, 0));
    for (int j = 0; j < pose::kNumJoints; ++j)
        res.pose2d[j] = {pose[j].x - off_x, pose[j].y - off_y};
    res.off_x = off_x;
    res.off_y = off_y;
    return res;
}

}  // namespace detail

// Uniform crop offset; re-drawn until every joint stays inside, 100 attempts.
// The center flag gives the deterministic floor((size - crop)/2) offset.
inline CropResult random_crop(const Image& img, const Pose2D& pose, int crop, Rng& rng,
                              bool center = false) {
    if (crop <= 0 || crop > img.w || crop > img.h)
        throw ConfigError(strf("crop: size %d does not fit %dx%d image", crop, img.w, img.h));
    const int max_x = img.w - crop, max_y = img.h - crop;
    if (center) {
        const int off_x = max_x / 2, off_y = max_y / 2;
        if (!detail::joints_inside(pose, off_x, off_y, crop))
            throw DomainError("crop: joints fall outside the center crop");
        return detail::crop_at(img, pose, crop, off_x, off_y);
    }
    std::uniform_int_distribution<int> ux(0, max_x), uy(0, max_y);
    for (int attempt = 0; attempt < 100; ++attempt) {
        const int off_x = ux(rng), off_y = uy(rng);
        if (detail::joints_inside(pose, off_x, off_y, crop))
            return detail::crop_at(img, pose, crop, off_x, off_y);
    }
    throw DomainError("crop: no offset kept all joints inside after 100 attempts");
}

}  // namespace p3d::data
