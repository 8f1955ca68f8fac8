#pragma once

#include <cstdint>
#include <vector>

#include "core/error.hpp"

namespace sfd {

// 8-bit interleaved raster, row-major; ch = 1 (gray) or 3 (RGB).
struct Image {
    int h = 0, w = 0, ch = 0;
    std::vector<uint8_t> px;

    Image() = default;
    Image(int h_, int w_, int ch_) : h(h_), w(w_), ch(ch_) {
        if (h_ <= 0 || w_ <= 0 || (ch_ != 1 && ch_ != 3))
            throw DimError(cat("image dims ", h_, "x", w_, "x", ch_));
        px.assign(static_cast<size_t>(h) * w * ch, 0);
    }

    uint8_t& at(int y, int x, int c) {
        return px[(static_cast<size_t>(y) * w + x) * ch + c];
    }
    uint8_t at(int y, int x, int c) const {
        return px[(static_cast<size_t>(y) * w + x) * ch + c];
    }

    bool operator==(const Image& o) const {
        return h == o.h && w == o.w && ch == o.ch && px == o.px;
    }
};

}  // namespace sfd
