#include "biaslens/tiler.hpp"

#include <algorithm>

#include "biaslens/errors.hpp"

namespace biaslens {

namespace {

bool intersects_positive_area(const Box& box, double tx0, double ty0, double tx1, double ty1) {
    const double ix0 = std::max(box.x, tx0);
    const double iy0 = std::max(box.y, ty0);
    const double ix1 = std::min(box.x + box.w, tx1);
    const double iy1 = std::min(box.y + box.h, ty1);
    return ix1 > ix0 && iy1 > iy0;
}

}  // namespace

TileSet split(const Sample& sample, int rows, int cols) {
    if (rows < 1 || cols < 1 || rows * cols < 2) {
        throw UsageError("tile grid must have at least 2 tiles");
    }
    if (sample.height % rows != 0 || sample.width % cols != 0) {
        throw DataError("image " + std::to_string(sample.height) + "x" +
                        std::to_string(sample.width) + " not divisible by grid " +
                        std::to_string(rows) + "x" + std::to_string(cols));
    }
    const int tile_h = sample.height / rows;
    const int tile_w = sample.width / cols;
    const int channels = sample.channels;

    TileSet set;
    set.parent_id = sample.id;
    set.tiles.reserve(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            Tile tile;
            tile.parent_id = sample.id;
            tile.index = r * cols + c;
            tile.height = tile_h;
            tile.width = tile_w;
            tile.channels = channels;
            tile.pixels.resize(static_cast<std::size_t>(tile_h) * tile_w * channels);
            const int y0 = r * tile_h;
            const int x0 = c * tile_w;
            for (int y = 0; y < tile_h; ++y) {
                const std::size_t src = (static_cast<std::size_t>(y0 + y) * sample.width + x0) * channels;
                const std::size_t dst = static_cast<std::size_t>(y) * tile_w * channels;
                std::copy_n(sample.pixels.begin() + static_cast<std::ptrdiff_t>(src),
                            static_cast<std::size_t>(tile_w) * channels,
                            tile.pixels.begin() + static_cast<std::ptrdiff_t>(dst));
            }
            for (const Box& box : sample.lesion_boxes) {
                if (intersects_positive_area(box, x0, y0, x0 + tile_w, y0 + tile_h)) {
                    tile.contains_lesion = true;
                    break;
                }
            }
            if (tile.contains_lesion) {
                set.r_plus.push_back(tile.index);
            } else {
                set.r_minus.push_back(tile.index);
            }
            set.tiles.push_back(std::move(tile));
        }
    }
    return set;
}

std::vector<Tile> background_tiles(const TileSet& tileset) {
    std::vector<Tile> result;
    result.reserve(tileset.r_minus.size());
    for (int idx : tileset.r_minus) result.push_back(tileset.tiles[static_cast<std::size_t>(idx)]);
    return result;
}

}  // namespace biaslens
