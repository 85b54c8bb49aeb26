#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "p3d/pose/grid.hpp"
#include "p3d/pose/types.hpp"

namespace p3d::pose {

// Squared Euclidean distance between the predicted relative position of
// joint j and its ground truth offset from root r, in normalized-pose units.
inline double loss_3d(const Vec3& pred_rel, const Pose3D& gt, int j, int r) {
    if (j == r) throw DomainError(strf("loss_3d: joint %d equals its own root", j));
    return (pred_rel - (gt[j] - gt[r])).norm2();
}

// Relative predictions for one root: 16 vectors ordered by joint id, the
// root itself skipped.
using RelativePose = std::vector<Vec3>;

// lambda_2d * sum_j CE(j) + lambda_3d * sum_{r in R} sum_{j != r} L3D(j, r)
inline double total_loss(const std::vector<GridDistribution>& pred_grids,
                         const std::vector<GridDistribution>& target_grids,
                         const std::map<int, RelativePose>& pred_rel,
                         const Pose3D& gt_normalized, const LossWeights& weights,
                         const RootSet& roots) {
    if (pred_grids.size() != kNumJoints || target_grids.size() != kNumJoints)
        throw ConfigError(strf("total_loss: expected %d grid distributions", kNumJoints));
    double l2d = 0.0;
    for (int j = 0; j < kNumJoints; ++j)
        l2d += cross_entropy_2d(pred_grids[j], target_grids[j]);

    double l3d = 0.0;
    for (int r : roots.indices) {
        auto it = pred_rel.find(r);
        if (it == pred_rel.end())
            throw ConfigError(strf("total_loss: missing predictions for root %d", r));
        if (it->second.size() != kNumJoints - 1)
            throw ConfigError(strf("total_loss: root %d has %zu predictions, expected %d",
                                   r, it->second.size(), kNumJoints - 1));
        size_t slot = 0;
        for (int j = 0; j < kNumJoints; ++j) {
            if (j == r) continue;
            l3d += loss_3d(it->second[slot++], gt_normalized, j, r);
        }
    }
    return weights.lambda_2d * l2d + weights.lambda_3d * l3d;
}

inline Vec3 centroid(const Pose3D& pose) {
    Vec3 c;
    for (const auto& p : pose) c += p;
    return c * (1.0 / kNumJoints);
}

// Each estimate is translated to zero mean over joints, then averaged.
inline Pose3D average_multi_root(const std::vector<Pose3D>& estimates) {
    if (estimates.empty())
        throw DomainError("average_multi_root: no estimates to fuse");
    Pose3D out{};
    for (const auto& est : estimates) {
        const Vec3 c = centroid(est);
        for (int j = 0; j < kNumJoints; ++j) out[j] += est[j] - c;
    }
    const double inv = 1.0 / static_cast<double>(estimates.size());
    for (auto& p : out) p = p * inv;
    return out;
}

// Zero mean, then unit Frobenius norm of the Nx3 matrix.
inline std::vector<Vec3> normalize_points(const std::vector<Vec3>& raw) {
    if (raw.empty()) throw DomainError("normalize_points: empty point set");
    Vec3 c;
    for (const auto& p : raw) c += p;
    c = c * (1.0 / static_cast<double>(raw.size()));
    double fro2 = 0.0;
    for (const auto& p : raw) fro2 += (p - c).norm2();
    const double fro = std::sqrt(fro2);
    if (fro < 1e-12)
        throw DomainError("normalize_points: degenerate set with zero extent");
    std::vector<Vec3> out(raw.size());
    for (size_t j = 0; j < raw.size(); ++j) out[j] = (raw[j] - c) * (1.0 / fro);
    return out;
}

inline Pose3D normalize_pose(const Pose3D& raw) {
    std::vector<Vec3> pts(raw.begin(), raw.end());
    std::vector<Vec3> n;
    try {
        n = normalize_points(pts);
    } catch (const DomainError&) {
        throw DomainError("normalize_pose: degenerate pose with zero extent");
    }
    Pose3D out;
    std::copy(n.begin(), n.end(), out.begin());
    return out;
}

inline double torso_length_sum(const Pose3D& pose) {
    double s = 0.0;
    for (auto [a, b] : kTorsoEdges) s += (pose[a] - pose[b]).norm();
    return s;
}

// Rescales an estimate so its torso edge lengths sum to the training average.
inline Pose3D recover_scale(const Pose3D& estimate,
                            const std::array<double, kTorsoEdges.size()>& avg_lengths) {
    double est_sum = 0.0;
    for (size_t e = 0; e < kTorsoEdges.size(); ++e) {
        auto [a, b] = kTorsoEdges[e];
        double len = (estimate[a] - estimate[b]).norm();
        if (len <= 0.0)
            throw DomainError(strf("recover_scale: zero-length torso edge %s-%s",
                                   std::string(kJointNames[a]).c_str(),
                                   std::string(kJointNames[b]).c_str()));
        est_sum += len;
    }
    double avg_sum = 0.0;
    for (double l : avg_lengths) avg_sum += l;
    const double s = avg_sum / est_sum;
    Pose3D out;
    for (int j = 0; j < kNumJoints; ++j) out[j] = estimate[j] * s;
    return out;
}

// Mean per joint position error. Both poses must already be expressed
// relative to the same root.
inline double mpjpe(const Pose3D& pred, const Pose3D& gt) {
    double acc = 0.0;
    for (int j = 0; j < kNumJoints; ++j) acc += (pred[j] - gt[j]).norm();
    return acc / kNumJoints;
}

// Pelvis-relative alignment used before MPJPE.
inline Pose3D root_align(const Pose3D& pose) {
    Pose3D out;
    for (int j = 0; j < kNumJoints; ++j) out[j] = pose[j] - pose[kPelvis];
    return out;
}

}  // namespace p3d::pose
