#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "p3d/common.hpp"
#include "p3d/pose/joints.hpp"

namespace p3d::pose {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x; y += o.y; z += o.z;
        return *this;
    }
    double norm() const { return std::sqrt(x * x + y * y + z * z); }
    double norm2() const { return x * x + y * y + z * z; }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

struct Vec2 {
    double x = 0.0, y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    double norm() const { return std::sqrt(x * x + y * y); }
};

// 17 joint positions in millimeters, camera coordinates.
using Pose3D = std::array<Vec3, kNumJoints>;
// 17 joint positions in pixels.
using Pose2D = std::array<Vec2, kNumJoints>;

// Per-joint probability vector over the N_g x N_g grid cells, row-major.
using GridDistribution = std::vector<double>;

// Square grid over the input image. Cell i = row * n_g + col has its center
// at ((col + 0.5) * w_g, (row + 0.5) * w_g).
struct GridGeometry {
    int n_g;
    double image_size;
    double w_g;

    GridGeometry(int n_g_, double image_size_) : n_g(n_g_), image_size(image_size_) {
        if (n_g <= 0) throw ConfigError("grid: n_g must be positive");
        if (image_size <= 0.0) throw ConfigError("grid: image size must be positive");
        w_g = image_size / n_g;
    }

    int cells() const { return n_g * n_g; }
    Vec2 center(int i) const {
        int row = i / n_g, col = i % n_g;
        return {(col + 0.5) * w_g, (row + 0.5) * w_g};
    }
};

struct LossWeights {
    double lambda_2d = 0.1;
    double lambda_3d = 0.5;

    LossWeights() = default;
    LossWeights(double l2d, double l3d) : lambda_2d(l2d), lambda_3d(l3d) {
        if (l2d < 0.0 || l3d < 0.0)
            throw ConfigError("loss weights must be non-negative");
    }
};

// Distinct joint ids used as regression roots.
struct RootSet {
    std::vector<int> indices;

    explicit RootSet(std::vector<int> ids) : indices(std::move(ids)) {
        if (indices.empty()) throw ConfigError("root set must not be empty");
        for (size_t i = 0; i < indices.size(); ++i) {
            if (indices[i] < 0 || indices[i] >= kNumJoints)
                throw ConfigError(strf("root set: invalid joint id %d", indices[i]));
            for (size_t j = 0; j < i; ++j)
                if (indices[i] == indices[j])
                    throw ConfigError(strf("root set: duplicate joint id %d", indices[i]));
        }
    }

    size_t count() const { return indices.size(); }
};

}  // namespace p3d::pose
