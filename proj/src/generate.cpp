#include "p3d/data/generate.hpp"

#include <algorithm>
#include <cmath>

#include "p3d/data/render.hpp"

namespace p3d::data {

namespace {

constexpr uint64_t kScaleStream = 0x7363616c;
constexpr uint64_t kStyleStream = 0x73747931;

const std::vector<int>& subjects_for(const GenConfig& config, Split split) {
    return split == Split::train ? config.train_subjects : config.test_subjects;
}

}  // namespace

double subject_scale(uint64_t master_seed, int subject) {
    const uint64_t h = splitmix64(splitmix64(master_seed) ^
                                  (kScaleStream + static_cast<uint64_t>(subject)));
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;  // [0, 1)
    return 0.86 + 0.28 * u;
}

RenderStyle subject_style(uint64_t master_seed, int subject) {
    Rng rng = make_rng(master_seed, kStyleStream + static_cast<uint64_t>(subject));
    return sample_style(rng);
}

Sample generate_sample(const GenConfig& config, Split split, uint64_t index) {
    config.validate();
    Rng rng = make_rng(config.master_seed + index, static_cast<uint64_t>(split));
    const auto& subjects = subjects_for(config, split);
    std::uniform_int_distribution<size_t> pick_subject(0, subjects.size() - 1);
    std::uniform_int_distribution<int> pick_action(0, kNumActions - 1);
    const int subject = subjects[pick_subject(rng)];
    const int action = pick_action(rng);
    const double scale = subject_scale(config.master_seed, subject);
    const SkeletonSpec spec = default_skeleton();
    const CameraModel& cam = config.camera;

    const double lo = config.margin, hi = config.render_size - config.margin;
    std::uniform_real_distribution<double> jitter(-4.0, 4.0);
    std::uniform_real_distribution<double> depth(cam.z_min_mm, cam.z_max_mm);

    for (int attempt = 0; attempt < 100; ++attempt) {
        Pose3D pose = sample_pose(spec, scale, static_cast<Action>(action), rng);
        const double z_root = depth(rng);
        const double tu = config.render_size / 2.0 + jitter(rng);
        const double tv = config.render_size / 2.0 + jitter(rng);

        // weak-perspective centering: project with the pelvis on the optical
        // axis, then translate so the bounding box center lands on the target
        Pose3D placed;
        for (int j = 0; j < pose::kNumJoints; ++j)
            placed[j] = pose[j] + Vec3{0.0, 0.0, z_root};
        if (placed[pose::kPelvis].z <= 0.0) continue;
        bool ok = true;
        double u0 = 1e30, u1 = -1e30, v0 = 1e30, v1 = -1e30;
        for (int j = 0; j < pose::kNumJoints && ok; ++j) {
            if (placed[j].z <= 0.0) {
                ok = false;
                break;
            }
            const Vec2 p = project_point(placed[j], cam);
            u0 = std::min(u0, p.x);
            u1 = std::max(u1, p.x);
            v0 = std::min(v0, p.y);
            v1 = std::max(v1, p.y);
        }
        if (!ok) continue;
        const double dx = (tu - (u0 + u1) / 2.0) * z_root / cam.focal_px;
        const double dy = (tv - (v0 + v1) / 2.0) * z_root / cam.focal_px;
        for (int j = 0; j < pose::kNumJoints; ++j) placed[j] += Vec3{dx, dy, 0.0};

        Pose2D pose2d = project(placed, cam);
        for (int j = 0; j < pose::kNumJoints && ok; ++j)
            if (pose2d[j].x < lo || pose2d[j].x >= hi || pose2d[j].y < lo ||
                pose2d[j].y >= hi)
                ok = false;
        if (!ok) continue;

        Sample s;
        s.pose3d = placed;
        s.pose2d = pose2d;
        s.action_id = static_cast<uint16_t>(action);
        s.subject_id = static_cast<uint16_t>(subject);
        const uint64_t noise_seed = rng();
        s.image = render(pose2d, config.render_size,
                         subject_style(config.master_seed, subject), noise_seed);
        return s;
    }
    throw DomainError(strf("gen: no placement kept sample %llu inside the frame",
                           static_cast<unsigned long long>(index)));
}

std::vector<Sample> generate_corpus(const GenConfig& config, Split split) {
    config.validate();
    std::vector<Sample> out;
    out.reserve(config.count);
    for (int i = 0; i < config.count; ++i)
        out.push_back(generate_sample(config, split, static_cast<uint64_t>(i)));
    return out;
}

}  // namespace p3d::data
