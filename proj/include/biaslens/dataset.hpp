#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace biaslens {

// Axis-aligned rectangle in pixel coordinates.
struct Box {
    double x = 0;
    double y = 0;
    double w = 0;
    double h = 0;

    bool operator==(const Box&) const = default;
};

enum class Split { train, val, test, unspecified };

struct ManifestEntry {
    std::string id;
    std::string path;  // as written in the manifest, relative to its directory
    int label = 0;     // -1 or +1
    std::vector<Box> lesion_boxes;
    std::map<std::string, bool> bias_truth;  // empty when absent

    bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    Split split = Split::unspecified;
    std::filesystem::path base_dir;  // directory paths are resolved against

    std::filesystem::path resolve(const ManifestEntry& entry) const {
        std::filesystem::path p(entry.path);
        return p.is_absolute() ? p : base_dir / p;
    }
};

// A loaded image sample. Pixels are row-major (y, x, channel) reals in [0,1].
struct Sample {
    std::string id;
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> pixels;
    int label = 0;
    std::vector<Box> lesion_boxes;
    std::optional<std::map<std::string, bool>> bias_truth;

    double at(int y, int x, int c) const {
        return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
    }
};

struct ImageShape {
    int height = 0;
    int width = 0;
    int channels = 0;
};

// Manifest file format: UTF-8, one JSON object per line,
//   {"id": str, "path": str, "label": -1|1, "lesion_boxes": [[x,y,w,h],...]}
// with optional "bias_truth": {name: bool}. Fails on duplicate ids, labels
// outside {-1,+1}, unresolvable paths, and malformed lines (with line number).
Manifest load_manifest(const std::filesystem::path& path);

void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

// Decodes the entry's image, normalizes pixels by 1/255 and clips lesion
// boxes to the image bounds. Negative entries must carry no boxes.
Sample load_sample(const Manifest& manifest, const ManifestEntry& entry, const ImageShape& shape);

}  // namespace biaslens
