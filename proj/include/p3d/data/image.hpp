#pragma once

#include <cstdint>
#include <vector>

#include "p3d/common.hpp"

namespace p3d::data {

// Interleaved 8-bit RGB, row-major.
struct Image {
    int h = 0;
    int w = 0;
    std::vector<uint8_t> data;

    Image() = default;
    Image(int h_, int w_) : h(h_), w(w_), data(static_cast<size_t>(h_) * w_ * 3, 0) {
        if (h_ <= 0 || w_ <= 0) throw ConfigError("image: dimensions must be positive");
    }

    uint8_t* px(int y, int x) { return data.data() + (static_cast<size_t>(y) * w + x) * 3; }
    const uint8_t* px(int y, int x) const {
        return data.data() + (static_cast<size_t>(y) * w + x) * 3;
    }

    bool operator==(const Image& o) const { return h == o.h && w == o.w && data == o.data; }
};

}  // namespace p3d::data
