#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace biaslens::png {

struct Image8 {
    int height = 0;
    int width = 0;
    int channels = 0;  // 1 (gray) or 3 (rgb)
    std::vector<std::uint8_t> data;  // row-major, interleaved channels

    std::uint8_t& at(int y, int x, int c) {
        return data[static_cast<std::size_t>((y * width + x) * channels + c)];
    }
    std::uint8_t at(int y, int x, int c) const {
        return data[static_cast<std::size_t>((y * width + x) * channels + c)];
    }
};

// 8-bit PNG only; throws DataError on decode/encode failure.
Image8 read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, const Image8& image);

}  // namespace biaslens::png
