#include "biaslens/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "biaslens/errors.hpp"
#include "biaslens/io.hpp"
#include "biaslens/png_io.hpp"

namespace biaslens {

namespace {

using nlohmann::json;

Split split_from_stem(const std::filesystem::path& path) {
    const std::string stem = path.stem().string();
    if (stem == "train") return Split::train;
    if (stem == "val") return Split::val;
    if (stem == "test") return Split::test;
    return Split::unspecified;
}

ManifestEntry parse_entry(const json& j, const std::filesystem::path& file, int line_no) {
    const auto fail = [&](const std::string& what) -> void {
        throw DataError(file.string() + ":" + std::to_string(line_no) + ": " + what);
    };
    if (!j.is_object()) fail("manifest line is not a JSON object");

    ManifestEntry entry;
    if (!j.contains("id") || !j["id"].is_string()) fail("missing string field 'id'");
    entry.id = j["id"].get<std::string>();
    if (!j.contains("path") || !j["path"].is_string()) fail("missing string field 'path'");
    entry.path = j["path"].get<std::string>();
    if (!j.contains("label") || !j["label"].is_number_integer()) fail("missing integer field 'label'");
    entry.label = j["label"].get<int>();
    if (entry.label != -1 && entry.label != 1) {
        fail("label must be -1 or 1, got " + std::to_string(entry.label));
    }
    if (j.contains("lesion_boxes")) {
        if (!j["lesion_boxes"].is_array()) fail("'lesion_boxes' must be an array");
        for (const auto& b : j["lesion_boxes"]) {
            if (!b.is_array() || b.size() != 4) fail("lesion box must be [x,y,w,h]");
            entry.lesion_boxes.push_back(Box{b[0].get<double>(), b[1].get<double>(),
                                             b[2].get<double>(), b[3].get<double>()});
        }
    }
    if (entry.label == -1 && !entry.lesion_boxes.empty()) {
        fail("negative sample '" + entry.id + "' carries lesion boxes");
    }
    if (j.contains("bias_truth")) {
        if (!j["bias_truth"].is_object()) fail("'bias_truth' must be an object");
        for (const auto& [name, value] : j["bias_truth"].items()) {
            if (!value.is_boolean()) fail("bias_truth values must be booleans");
            entry.bias_truth[name] = value.get<bool>();
        }
    }
    return entry;
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path.string());

    Manifest manifest;
    manifest.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    manifest.split = split_from_stem(path);

    std::unordered_set<std::string> seen;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(line_no) +
                            ": JSON parse error: " + e.what());
        }
        ManifestEntry entry = parse_entry(j, path, line_no);
        if (!seen.insert(entry.id).second) {
            throw DataError(path.string() + ":" + std::to_string(line_no) +
                            ": duplicate id '" + entry.id + "'");
        }
        if (!std::filesystem::exists(manifest.resolve(entry))) {
            throw DataError(path.string() + ":" + std::to_string(line_no) +
                            ": image path not resolvable: " + manifest.resolve(entry).string());
        }
        manifest.entries.push_back(std::move(entry));
    }
    return manifest;
}

void save_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    io::atomic_write(path, [&](std::ostream& out) {
        for (const auto& entry : manifest.entries) {
            json j;
            j["id"] = entry.id;
            j["path"] = entry.path;
            j["label"] = entry.label;
            json boxes = json::array();
            for (const auto& b : entry.lesion_boxes) {
                boxes.push_back(json::array({b.x, b.y, b.w, b.h}));
            }
            j["lesion_boxes"] = boxes;
            if (!entry.bias_truth.empty()) {
                json truth = json::object();
                for (const auto& [name, value] : entry.bias_truth) truth[name] = value;
                j["bias_truth"] = truth;
            }
            out << j.dump() << "\n";
        }
    });
}

Sample load_sample(const Manifest& manifest, const ManifestEntry& entry, const ImageShape& shape) {
    const auto image_path = manifest.resolve(entry);
    png::Image8 image = png::read(image_path);
    if (image.height != shape.height || image.width != shape.width ||
        image.channels != shape.channels) {
        throw DataError("dimension mismatch for '" + entry.id + "': image is " +
                        std::to_string(image.height) + "x" + std::to_string(image.width) + "x" +
                        std::to_string(image.channels) + ", expected " +
                        std::to_string(shape.height) + "x" + std::to_string(shape.width) + "x" +
                        std::to_string(shape.channels));
    }

    Sample sample;
    sample.id = entry.id;
    sample.height = image.height;
    sample.width = image.width;
    sample.channels = image.channels;
    sample.label = entry.label;
    sample.pixels.resize(image.data.size());
    for (std::size_t i = 0; i < image.data.size(); ++i) {
        sample.pixels[i] = static_cast<double>(image.data[i]) / 255.0;
    }

    for (Box box : entry.lesion_boxes) {
        const double x0 = std::clamp(box.x, 0.0, static_cast<double>(sample.width));
        const double y0 = std::clamp(box.y, 0.0, static_cast<double>(sample.height));
        const double x1 = std::clamp(box.x + box.w, 0.0, static_cast<double>(sample.width));
        const double y1 = std::clamp(box.y + box.h, 0.0, static_cast<double>(sample.height));
        if (x1 - x0 <= 0 || y1 - y0 <= 0) continue;  // entirely outside
        sample.lesion_boxes.push_back(Box{x0, y0, x1 - x0, y1 - y0});
    }
    if (!entry.bias_truth.empty()) sample.bias_truth = entry.bias_truth;
    return sample;
}

}  // namespace biaslens
