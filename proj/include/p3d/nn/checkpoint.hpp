#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "p3d/common.hpp"

namespace p3d::nn {

// One named array in a checkpoint. Values are held as f64 in memory; the
// dtype tag decides the on-disk width (0 = f32, 1 = f64).
struct Blob {
    std::string name;
    uint8_t dtype = 1;
    std::vector<uint32_t> dims;
    std::vector<double> values;

    size_t numel() const {
        size_t n = 1;
        for (uint32_t d : dims) n *= d;
        return n;
    }
};

inline constexpr uint32_t kCheckpointVersion = 1;

// Layout: "P3CK", u32 version, u32 blob count; per blob: u16 name length,
// name bytes, u8 dtype, u32 rank, rank x u32 dims, raw little-endian values.
void write_checkpoint(const std::filesystem::path& path, const std::vector<Blob>& blobs);
std::vector<Blob> read_checkpoint(const std::filesystem::path& path);

}  // namespace p3d::nn
