#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <utility>

#include "p3d/common.hpp"
#include "p3d/pose/joints.hpp"
#include "p3d/pose/types.hpp"

namespace p3d::data {

using pose::Pose3D;
using pose::Vec3;

// Articulated stick skeleton. Bone j runs from kJointParent[j] to j; its
// canonical direction is the T-pose direction in camera coordinates
// (x right, y down, z away from the camera).
struct SkeletonSpec {
    std::array<double, pose::kNumJoints> bone_length_mm;  // [0] unused (root)
    std::array<Vec3, pose::kNumJoints> canonical_dir;     // unit vectors
    std::array<double, pose::kNumJoints> angle_limit;     // max |deviation|, radians

    double height_mm() const {
        // pelvis to head plus pelvis to ankle, the vertical chains
        return bone_length_mm[pose::kSpine] + bone_length_mm[pose::kThorax] +
               bone_length_mm[pose::kNeck] + bone_length_mm[pose::kHead] +
               bone_length_mm[pose::kLeftKnee] + bone_length_mm[pose::kLeftAnkle];
    }
};

inline SkeletonSpec default_skeleton() {
    using namespace pose;
    SkeletonSpec s{};
    auto set = [&](int j, double len, Vec3 dir, double limit) {
        s.bone_length_mm[j] = len;
        double n = dir.norm();
        s.canonical_dir[j] = dir * (1.0 / n);
        s.angle_limit[j] = limit;
    };
    set(kLeftHip, 130.0, {1, 0, 0}, 0.15);
    set(kLeftKnee, 450.0, {0, 1, 0}, 1.70);
    set(kLeftAnkle, 440.0, {0, 1, 0}, 1.30);
    set(kRightHip, 130.0, {-1, 0, 0}, 0.15);
    set(kRightKnee, 450.0, {0, 1, 0}, 1.70);
    set(kRightAnkle, 440.0, {0, 1, 0}, 1.30);
    set(kSpine, 220.0, {0, -1, 0}, 0.50);
    set(kThorax, 230.0, {0, -1, 0}, 0.40);
    set(kNeck, 90.0, {0, -1, 0}, 0.50);
    set(kHead, 120.0, {0, -1, 0}, 0.60);
    set(kLeftShoulder, 170.0, {1, 0, 0}, 0.25);
    set(kLeftElbow, 280.0, {1, 0, 0}, 1.60);
    set(kLeftWrist, 250.0, {1, 0, 0}, 1.50);
    set(kRightShoulder, 170.0, {-1, 0, 0}, 0.25);
    set(kRightElbow, 280.0, {-1, 0, 0}, 1.60);
    set(kRightWrist, 250.0, {-1, 0, 0}, 1.50);
    return s;
}

// Two rotation angles per bone, applied about fixed perpendicular axes.
struct JointAngles {
    std::array<double, pose::kNumJoints> a{};  // swing toward +y (or +z for vertical bones)
    std::array<double, pose::kNumJoints> b{};  // swing about the second axis
};

enum class Action : int { walking = 0, standing = 1, sitting = 2 };
inline constexpr int kNumActions = 3;

inline const char* action_name(int id) {
    switch (id) {
        case 0: return "walking";
        case 1: return "standing";
        case 2: return "sitting";
        default: return "unknown";
    }
}

namespace detail {

inline Vec3 rotate(const Vec3& v, const Vec3& axis, double angle) {
    // Rodrigues' formula; axis must be unit length
    const double c = std::cos(angle), s = std::sin(angle);
    return v * c + cross(axis, v) * s + axis * (dot(axis, v) * (1.0 - c));
}

// Perpendicular axis pair for a canonical direction. Horizontal bones swing
// about the z axis (toward down), vertical ones about x (toward the camera).
inline std::pair<Vec3, Vec3> swing_axes(const Vec3& d) {
    const Vec3 down{0, 1, 0};
    Vec3 u = cross(d, down);
    if (u.norm() < 1e-9) u = {1, 0, 0};
    u = u * (1.0 / u.norm());
    Vec3 v = cross(d, u);
    v = v * (1.0 / v.norm());
    return {u, v};
}

struct Regime {
    double mean_a, range_a, mean_b, range_b;
};

// Per-action posture tables, indexed by bone. Bones without an entry get a
// centered draw over a fraction of the joint limit.
inline std::optional<Regime> regime_for(Action action, int j) {
    using namespace pose;
    const bool leg = (j == kLeftKnee || j == kRightKnee);
    const bool shin = (j == kLeftAnkle || j == kRightAnkle);
    const bool arm = (j == kLeftElbow || j == kRightElbow);
    const bool forearm = (j == kLeftWrist || j == kRightWrist);
    const bool torso = (j == kSpine || j == kThorax);
    switch (action) {
        case Action::walking:
            if (leg) return Regime{0.0, 0.55, 0.0, 0.15};
            if (shin) return Regime{-0.35, 0.45, 0.0, 0.10};
            if (arm) return Regime{1.15, 0.25, 0.0, 0.20};      // arms hang, swinging
            if (forearm) return Regime{0.25, 0.45, 0.0, 0.25};
            if (torso) return Regime{0.0, 0.12, 0.0, 0.08};
            break;
        case Action::standing:
            if (leg) return Regime{0.0, 0.10, 0.0, 0.08};
            if (shin) return Regime{0.0, 0.08, 0.0, 0.05};
            if (arm) return Regime{1.30, 0.15, 0.0, 0.15};      // arms at the sides
            if (forearm) return Regime{0.10, 0.25, 0.0, 0.20};
            if (torso) return Regime{0.0, 0.06, 0.0, 0.05};
            break;
        case Action::sitting:
            if (leg) return Regime{-1.25, 0.25, 0.0, 0.20};     // thighs toward the camera
            if (shin) return Regime{1.10, 0.20, 0.0, 0.15};     // knees bent down
            if (arm) return Regime{1.05, 0.30, 0.0, 0.20};
            if (forearm) return Regime{0.45, 0.45, 0.0, 0.30};
            if (torso) return Regime{0.0, 0.20, 0.1, 0.10};
            break;
    }
    return std::nullopt;
}

}  // namespace detail

// Uniform draws from the action regime, clamped to the per-joint limits.
inline JointAngles sample_angles(const SkeletonSpec& spec, Action action, Rng& rng) {
    JointAngles angles;
    for (int j = 1; j < pose::kNumJoints; ++j) {
        const double lim = spec.angle_limit[j];
        auto reg = detail::regime_for(action, j).value_or(
            detail::Regime{0.0, 0.4 * lim, 0.0, 0.4 * lim});
        auto draw = [&](double mean, double range) {
            std::uniform_real_distribution<double> uni(mean - range, mean + range);
            return std::clamp(uni(rng), -lim, lim);
        };
        angles.a[j] = draw(reg.mean_a, reg.range_a);
        angles.b[j] = draw(reg.mean_b, reg.range_b);
    }
    return angles;
}

// Forward kinematics: every bone keeps its exact scaled spec length.
inline Pose3D pose_from_angles(const SkeletonSpec& spec, double scale,
                               const JointAngles& angles) {
    if (scale < 0.85 || scale > 1.15)
        throw ConfigError(strf("pose_from_angles: scale %.3f outside [0.85, 1.15]", scale));
    Pose3D out{};
    out[pose::kPelvis] = {0, 0, 0};
    for (int j = 1; j < pose::kNumJoints; ++j) {
        const Vec3 d = spec.canonical_dir[j];
        auto [u, v] = detail::swing_axes(d);
        Vec3 dir = detail::rotate(detail::rotate(d, v, angles.b[j]), u, angles.a[j]);
        out[j] = out[pose::kJointParent[j]] + dir * (spec.bone_length_mm[j] * scale);
    }
    return out;
}

inline Pose3D sample_pose(const SkeletonSpec& spec, double scale, Action action, Rng& rng) {
    return pose_from_angles(spec, scale, sample_angles(spec, action, rng));
}

}  // namespace p3d::data
