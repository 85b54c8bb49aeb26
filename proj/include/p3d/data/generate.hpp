#pragma once

#include <cstdint>
#include <vector>

#include "p3d/common.hpp"
#include "p3d/data/camera.hpp"
#include "p3d/data/dataset.hpp"
#include "p3d/data/render.hpp"
#include "p3d/data/skeleton.hpp"

namespace p3d::data {

enum class Split : int { train = 1, test = 2 };

// Synthetic corpus parameters. Images are rendered slightly larger than the
// network input so training can take random crops and evaluation the center
// crop.
struct GenConfig {
    int count = 500;
    int render_size = 72;
    int margin = 8;  // joints stay within [margin, render_size - margin)
    uint64_t master_seed = 1;
    CameraModel camera{140.0, 36.0, 36.0, 4500.0, 6500.0};
    std::vector<int> train_subjects = {1, 5, 6, 7, 8};
    std::vector<int> test_subjects = {9, 11};

    void validate() const {
        if (count <= 0) throw ConfigError("gen: count must be positive");
        if (render_size <= 0) throw ConfigError("gen: render size must be positive");
        if (margin < 0 || 2 * margin >= render_size)
            throw ConfigError("gen: margin leaves no room for the subject");
        if (train_subjects.empty() || test_subjects.empty())
            throw ConfigError("gen: both subject lists must be non-empty");
        for (int s : train_subjects)
            for (int t : test_subjects)
                if (s == t) throw ConfigError(strf("gen: subject %d in both splits", s));
    }
};

// Bone-scale factor and render style are fixed per subject, so a network can
// overfit subject appearance on the training split but not on the test split.
double subject_scale(uint64_t master_seed, int subject);
RenderStyle subject_style(uint64_t master_seed, int subject);

// Sample `index` of the split; independent of all other indices.
Sample generate_sample(const GenConfig& config, Split split, uint64_t index);

std::vector<Sample> generate_corpus(const GenConfig& config, Split split);

}  // namespace p3d::data
