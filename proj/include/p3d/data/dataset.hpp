#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "p3d/common.hpp"
#include "p3d/data/image.hpp"
#include "p3d/pose/types.hpp"

namespace p3d::data {

struct Sample {
    Image image;
    pose::Pose2D pose2d;  // pixels, image frame
    pose::Pose3D pose3d;  // millimeters, camera frame
    uint16_t action_id = 0;
    uint16_t subject_id = 0;
};

inline constexpr uint32_t kDatasetVersion = 1;

// Header + per-sample record size for a H x W x 3 corpus.
inline size_t dataset_file_size(size_t count, int h, int w) {
    const size_t header = 4 + 4 + 4 + 4 * 2;
    const size_t record = 2 + 2 + static_cast<size_t>(h) * w * 3 +
                          17ull * 2 * 4 + 17ull * 3 * 4;
    return header + count * record;
}

// Layout: "P3D1", u32 version, u32 count, u16 H, u16 W, u16 C = 3, u16 N_j = 17;
// per sample: u16 action_id, u16 subject_id, HWC bytes, 17x2 f32 pose2d,
// 17x3 f32 pose3d. Little-endian throughout.
//
// The two-argument form infers the image dimensions and therefore rejects an
// empty corpus; pass dimensions explicitly to write a header-only file.
void write_dataset(const std::filesystem::path& path, const std::vector<Sample>& samples);
void write_dataset(const std::filesystem::path& path, const std::vector<Sample>& samples,
                   int h, int w);
std::vector<Sample> read_dataset(const std::filesystem::path& path);

}  // namespace p3d::data
