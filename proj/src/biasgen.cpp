#include "biaslens/biasgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "biaslens/errors.hpp"
#include "biaslens/eval.hpp"
#include "biaslens/io.hpp"
#include "biaslens/kvconfig.hpp"
#include "biaslens/png_io.hpp"
#include "biaslens/rng.hpp"
#include "biaslens/selector.hpp"

namespace biaslens {

namespace {

struct TileRect {
    int x0, y0, x1, y1;  // half-open pixel bounds
};

TileRect tile_rect(const GenConfig& c, int tile_index) {
    const int tile_h = c.shape.height / c.grid_rows;
    const int tile_w = c.shape.width / c.grid_cols;
    const int r = tile_index / c.grid_cols;
    const int col = tile_index % c.grid_cols;
    return {col * tile_w, r * tile_h, (col + 1) * tile_w, (r + 1) * tile_h};
}

void add_rect(std::vector<double>& pixels, const GenConfig& c, int x0, int y0, int x1, int y1,
              double delta) {
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            for (int ch = 0; ch < c.shape.channels; ++ch) {
                pixels[static_cast<std::size_t>((y * c.shape.width + x) * c.shape.channels + ch)] +=
                    delta;
            }
        }
    }
}

void add_disk(std::vector<double>& pixels, const GenConfig& c, int cx, int cy, int radius,
              double delta) {
    for (int y = cy - radius; y <= cy + radius; ++y) {
        for (int x = cx - radius; x <= cx + radius; ++x) {
            const int dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy > radius * radius) continue;
            for (int ch = 0; ch < c.shape.channels; ++ch) {
                pixels[static_cast<std::size_t>((y * c.shape.width + x) * c.shape.channels + ch)] +=
                    delta;
            }
        }
    }
}

std::uint64_t split_salt(const std::string& tag) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : tag) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

int uniform_int(Rng& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

std::string sample_id(const std::string& tag, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%06d", tag.c_str(), index);
    return buf;
}

std::vector<std::string> split_csv(const std::string& value) {
    std::vector<std::string> out;
    std::string token;
    std::istringstream ss(value);
    while (std::getline(ss, token, ',')) {
        const auto b = token.find_first_not_of(" \t");
        const auto e = token.find_last_not_of(" \t");
        out.push_back(b == std::string::npos ? "" : token.substr(b, e - b + 1));
    }
    return out;
}

}  // namespace

ArtifactKind parse_artifact_kind(const std::string& name) {
    if (name == "stripe") return ArtifactKind::stripe;
    if (name == "corner_dot") return ArtifactKind::corner_dot;
    if (name == "brightness_tint") return ArtifactKind::brightness_tint;
    throw UsageError("unknown artifact kind '" + name +
                     "' (expected stripe|corner_dot|brightness_tint)");
}

const char* artifact_kind_name(ArtifactKind kind) {
    switch (kind) {
        case ArtifactKind::stripe: return "stripe";
        case ArtifactKind::corner_dot: return "corner_dot";
        case ArtifactKind::brightness_tint: return "brightness_tint";
    }
    return "?";
}

void validate(const GenConfig& c) {
    if (c.n_train < 2 || c.n_val < 0 || c.n_test < 2) {
        throw UsageError("generator needs n_train >= 2 and n_test >= 2");
    }
    if (c.shape.channels != 1 && c.shape.channels != 3) {
        throw UsageError("generator supports 1 or 3 channels");
    }
    if (c.shape.height % c.grid_rows != 0 || c.shape.width % c.grid_cols != 0) {
        throw UsageError("image size must be divisible by the tile grid");
    }
    const int tile_h = c.shape.height / c.grid_rows;
    const int tile_w = c.shape.width / c.grid_cols;
    if (2 * c.blob_radius_max + 1 > std::min(tile_h, tile_w)) {
        throw UsageError("lesion blob (radius " + std::to_string(c.blob_radius_max) +
                         ") does not fit inside a " + std::to_string(tile_h) + "x" +
                         std::to_string(tile_w) + " tile");
    }
    if (c.blob_radius_min < 1 || c.blob_radius_min > c.blob_radius_max) {
        throw UsageError("invalid blob radius range");
    }
    const int tiles = c.grid_rows * c.grid_cols;
    if (c.blob_count_min < 1 || c.blob_count_min > c.blob_count_max ||
        c.blob_count_max > tiles - 1) {
        throw UsageError("blob count range must fit within [1, T-1]");
    }
    if (tile_w < 4 || tile_h < 6) throw UsageError("tiles too small for artifact rendering");
    for (const auto& a : c.artifacts) {
        if (a.rho_p < 0.0 || a.rho_p > 1.0 || a.rho_n < 0.0 || a.rho_n > 1.0) {
            throw UsageError("artifact '" + a.name + "' correlation outside [0,1]");
        }
    }
    if (c.noise_sigma < 0.0) throw UsageError("noise sigma must be nonnegative");
}

RenderedSample render_sample(const GenConfig& c, const std::string& split_tag, int index) {
    RenderedSample out;
    out.id = sample_id(split_tag, index);
    out.label = index % 2 == 0 ? 1 : -1;

    const std::size_t pixel_count =
        static_cast<std::size_t>(c.shape.height) * c.shape.width * c.shape.channels;
    out.pixels.assign(pixel_count, c.background_level);

    Rng rng(mix_seed(stage_seed(c.seed, "generate") ^ split_salt(split_tag),
                     static_cast<std::uint64_t>(index)));

    const int tiles = c.grid_rows * c.grid_cols;
    std::vector<char> tile_has_lesion(static_cast<std::size_t>(tiles), 0);

    if (out.label == 1) {
        const int count = uniform_int(rng, c.blob_count_min, c.blob_count_max);
        std::vector<int> tile_order(static_cast<std::size_t>(tiles));
        std::iota(tile_order.begin(), tile_order.end(), 0);
        std::shuffle(tile_order.begin(), tile_order.end(), rng);
        for (int b = 0; b < count; ++b) {
            const int tile = tile_order[static_cast<std::size_t>(b)];
            const TileRect rect = tile_rect(c, tile);
            const int radius = uniform_int(rng, c.blob_radius_min, c.blob_radius_max);
            const int cx = uniform_int(rng, rect.x0 + radius, rect.x1 - 1 - radius);
            const int cy = uniform_int(rng, rect.y0 + radius, rect.y1 - 1 - radius);
            add_disk(out.pixels, c, cx, cy, radius, c.blob_contrast);
            out.lesion_boxes.push_back(Box{static_cast<double>(cx - radius),
                                           static_cast<double>(cy - radius),
                                           static_cast<double>(2 * radius + 1),
                                           static_cast<double>(2 * radius + 1)});
            tile_has_lesion[static_cast<std::size_t>(tile)] = 1;
        }
    }

    std::vector<int> background;
    for (int t = 0; t < tiles; ++t) {
        if (!tile_has_lesion[static_cast<std::size_t>(t)]) background.push_back(t);
    }

    for (const auto& artifact : c.artifacts) {
        const double rho = out.label == 1 ? artifact.rho_p : artifact.rho_n;
        const bool carrier = std::bernoulli_distribution(rho)(rng);
        out.bias_truth[artifact.name] = carrier;
        if (!carrier) continue;
        switch (artifact.kind) {
            case ArtifactKind::stripe: {
                const int tile = background[static_cast<std::size_t>(
                    uniform_int(rng, 0, static_cast<int>(background.size()) - 1))];
                const TileRect rect = tile_rect(c, tile);
                const int x = uniform_int(rng, rect.x0 + 1, rect.x1 - 3);
                add_rect(out.pixels, c, x, rect.y0, x + 2, rect.y1, artifact.magnitude);
                out.artifact_rects.push_back(Box{static_cast<double>(x),
                                                 static_cast<double>(rect.y0), 2.0,
                                                 static_cast<double>(rect.y1 - rect.y0)});
                break;
            }
            case ArtifactKind::corner_dot: {
                const int tile = background[static_cast<std::size_t>(
                    uniform_int(rng, 0, static_cast<int>(background.size()) - 1))];
                const TileRect rect = tile_rect(c, tile);
                const int corner = uniform_int(rng, 0, 3);
                const int x0 = (corner % 2 == 0) ? rect.x0 + 1 : rect.x1 - 5;
                const int y0 = (corner / 2 == 0) ? rect.y0 + 1 : rect.y1 - 5;
                add_rect(out.pixels, c, x0, y0, x0 + 4, y0 + 4, artifact.magnitude);
                out.artifact_rects.push_back(
                    Box{static_cast<double>(x0), static_cast<double>(y0), 4.0, 4.0});
                break;
            }
            case ArtifactKind::brightness_tint: {
                for (double& p : out.pixels) p += artifact.magnitude;
                break;
            }
        }
    }

    if (c.noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, c.noise_sigma);
        for (double& p : out.pixels) p += noise(rng);
    }
    for (double& p : out.pixels) p = std::clamp(p, 0.0, 1.0);
    return out;
}

GeneratedDataset generate(const GenConfig& config, const std::filesystem::path& out_dir) {
    validate(config);
    namespace fs = std::filesystem;
    fs::create_directories(out_dir / "images");

    const auto emit_split = [&](const std::string& tag, int n,
                                const fs::path& manifest_path) {
        Manifest manifest;
        manifest.base_dir = out_dir;
        for (int i = 0; i < n; ++i) {
            const RenderedSample rendered = render_sample(config, tag, i);

            png::Image8 image;
            image.height = config.shape.height;
            image.width = config.shape.width;
            image.channels = config.shape.channels;
            image.data.resize(rendered.pixels.size());
            for (std::size_t p = 0; p < rendered.pixels.size(); ++p) {
                image.data[p] =
                    static_cast<std::uint8_t>(std::lround(rendered.pixels[p] * 255.0));
            }
            const std::string file_name = rendered.id + ".png";
            png::write(out_dir / "images" / file_name, image);

            ManifestEntry entry;
            entry.id = rendered.id;
            entry.path = "images/" + file_name;
            entry.label = rendered.label;
            entry.lesion_boxes = rendered.lesion_boxes;
            entry.bias_truth = rendered.bias_truth;
            manifest.entries.push_back(std::move(entry));
        }
        save_manifest(manifest_path, manifest);
    };

    GeneratedDataset result;
    result.train_manifest = out_dir / "train.jsonl";
    result.val_manifest = out_dir / "val.jsonl";
    result.test_manifest = out_dir / "test.jsonl";
    emit_split("tr", config.n_train, result.train_manifest);
    emit_split("va", config.n_val, result.val_manifest);
    emit_split("te", config.n_test, result.test_manifest);
    return result;
}

GenConfig load_gen_config(const std::filesystem::path& path) {
    GenConfig config;
    config.artifacts.clear();
    for (const KeyValue& kv : parse_key_values(path)) {
        const std::string& key = kv.key;
        const std::string& value = kv.value;
        try {
            if (key == "n_train") config.n_train = std::stoi(value);
            else if (key == "n_val") config.n_val = std::stoi(value);
            else if (key == "n_test") config.n_test = std::stoi(value);
            else if (key == "image_h") config.shape.height = std::stoi(value);
            else if (key == "image_w") config.shape.width = std::stoi(value);
            else if (key == "channels") config.shape.channels = std::stoi(value);
            else if (key == "grid_rows") config.grid_rows = std::stoi(value);
            else if (key == "grid_cols") config.grid_cols = std::stoi(value);
            else if (key == "blob_radius_min") config.blob_radius_min = std::stoi(value);
            else if (key == "blob_radius_max") config.blob_radius_max = std::stoi(value);
            else if (key == "blob_count_min") config.blob_count_min = std::stoi(value);
            else if (key == "blob_count_max") config.blob_count_max = std::stoi(value);
            else if (key == "blob_contrast") config.blob_contrast = std::stod(value);
            else if (key == "background_level") config.background_level = std::stod(value);
            else if (key == "noise_sigma") config.noise_sigma = std::stod(value);
            else if (key == "seed") config.seed = std::stoull(value);
            else if (key == "artifact") {
                const auto fields = split_csv(value);
                if (fields.size() != 5) {
                    throw UsageError("artifact needs name,kind,rho_p,rho_n,magnitude");
                }
                ArtifactSpec spec;
                spec.name = fields[0];
                spec.kind = parse_artifact_kind(fields[1]);
                spec.rho_p = std::stod(fields[2]);
                spec.rho_n = std::stod(fields[3]);
                spec.magnitude = std::stod(fields[4]);
                config.artifacts.push_back(spec);
            } else {
                throw UsageError("unknown key '" + key + "'");
            }
        } catch (const std::invalid_argument&) {
            throw UsageError(path.string() + ":" + std::to_string(kv.line) +
                             ": bad value for '" + key + "'");
        } catch (const UsageError& e) {
            throw UsageError(path.string() + ":" + std::to_string(kv.line) + ": " + e.what());
        }
    }
    validate(config);
    return config;
}

std::map<std::string, bool> truth_column(const Manifest& manifest, const std::string& artifact) {
    std::map<std::string, bool> truth;
    for (const auto& entry : manifest.entries) {
        const auto it = entry.bias_truth.find(artifact);
        if (it == entry.bias_truth.end()) {
            throw DataError("sample '" + entry.id + "' has no bias_truth for artifact '" +
                            artifact + "'");
        }
        truth[entry.id] = it->second;
    }
    return truth;
}

double artifact_separation_auc(const EmbeddingTable& table, const DirectionBundle& bundle,
                               const std::map<std::string, bool>& truth_by_id) {
    if (bundle.k() < 1) throw UsageError("direction bundle is empty");
    const Eigen::MatrixXd proj = project(table, bundle);

    std::vector<double> values(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        values[i] = proj(static_cast<Eigen::Index>(i), 0);
    }
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted.size() % 2 == 1
                              ? sorted[sorted.size() / 2]
                              : (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]) / 2.0;

    std::vector<double> scores(values.size());
    std::vector<char> flags(values.size());
    bool any_true = false, any_false = false;
    for (std::size_t i = 0; i < values.size(); ++i) {
        scores[i] = std::abs(values[i] - median);
        const auto it = truth_by_id.find(table.rows[i].sample_id);
        if (it == truth_by_id.end()) {
            throw DataError("no artifact truth for sample '" + table.rows[i].sample_id + "'");
        }
        flags[i] = it->second ? 1 : 0;
        (it->second ? any_true : any_false) = true;
    }
    if (!any_true || !any_false) {
        throw DataError("artifact truth column has a single class; AUC undefined");
    }
    const auto auc = rank_auc(scores, flags);
    return *auc;
}

}  // namespace biaslens
