#pragma once

#include "p3d/common.hpp"
#include "p3d/pose/types.hpp"

namespace p3d::data {

using pose::Pose2D;
using pose::Pose3D;
using pose::Vec2;
using pose::Vec3;

// Pinhole camera at the origin looking along +z.
struct CameraModel {
    double focal_px = 140.0;
    double cx = 36.0;
    double cy = 36.0;
    double z_min_mm = 4500.0;
    double z_max_mm = 6500.0;

    CameraModel() = default;
    CameraModel(double f, double cx_, double cy_, double zmin, double zmax)
        : focal_px(f), cx(cx_), cy(cy_), z_min_mm(zmin), z_max_mm(zmax) {
        if (f <= 0.0) throw ConfigError("camera: focal length must be positive");
        if (zmin <= 0.0 || zmax < zmin) throw ConfigError("camera: bad depth range");
    }
};

inline Vec2 project_point(const Vec3& p, const CameraModel& cam) {
    if (p.z <= 0.0)
        throw DomainError(strf("project: point at depth %.1f is not in front of the camera",
                               p.z));
    return {cam.focal_px * p.x / p.z + cam.cx, cam.focal_px * p.y / p.z + cam.cy};
}

inline Pose2D project(const Pose3D& pose, const CameraModel& cam) {
    Pose2D out;
    for (int j = 0; j < pose::kNumJoints; ++j) out[j] = project_point(pose[j], cam);
    return out;
}

}  // namespace p3d::data
