#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mbs/util.hpp"

namespace mbs {

// 8-bit interleaved RGB, row-major from the top-left.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}
    std::uint8_t* pixel(int x, int y) {
        return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
    const std::uint8_t* pixel(int x, int y) const {
        return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
};

Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

Image read_png(const std::string& path);

// Dispatch on extension (.ppm / .png).
Image read_image(const std::string& path);

}  // namespace mbs
