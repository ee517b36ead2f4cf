#pragma once

#include <string>
#include <vector>

#include "biaslens/dataset.hpp"

namespace biaslens {

struct Tile {
    std::string parent_id;
    int index = 0;  // row-major position in the grid, top-left = 0
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> pixels;
    bool contains_lesion = false;

    double at(int y, int x, int c) const {
        return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
    }
};

struct TileSet {
    std::string parent_id;
    std::vector<Tile> tiles;
    std::vector<int> r_plus;   // lesion-bearing tile indices
    std::vector<int> r_minus;  // background-only tile indices
};

// Splits the sample into a rows x cols grid of equally sized tiles. A tile is
// lesion-bearing iff some lesion box intersects its rectangle with positive
// area (an edge touch does not count). Image dimensions must divide the grid.
TileSet split(const Sample& sample, int rows, int cols);

// Tiles at r_minus indices, order preserved. May be empty.
std::vector<Tile> background_tiles(const TileSet& tileset);

}  // namespace biaslens
