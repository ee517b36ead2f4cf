#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "biaslens/bd2a.hpp"
#include "biaslens/dataset.hpp"
#include "biaslens/klotski.hpp"

namespace biaslens {

enum class ArtifactKind { stripe, corner_dot, brightness_tint };

ArtifactKind parse_artifact_kind(const std::string& name);
const char* artifact_kind_name(ArtifactKind kind);

struct ArtifactSpec {
    std::string name;
    ArtifactKind kind = ArtifactKind::stripe;
    double rho_p = 0.0;     // carrier probability among positives
    double rho_n = 0.0;     // carrier probability among negatives
    double magnitude = 0.0; // signed intensity shift
};

struct GenConfig {
    int n_train = 2000;
    int n_val = 500;
    int n_test = 1000;
    ImageShape shape{80, 80, 1};
    int grid_rows = 4;
    int grid_cols = 4;
    int blob_radius_min = 3;
    int blob_radius_max = 6;
    int blob_count_min = 1;
    int blob_count_max = 3;
    double blob_contrast = 0.12;
    double background_level = 0.35;
    double noise_sigma = 0.05;
    std::vector<ArtifactSpec> artifacts;
    std::uint64_t seed = 42;
};

// One rendered sample before quantization; artifact rectangles are kept so
// tests can check they never touch a lesion box.
struct RenderedSample {
    std::string id;
    int label = 0;
    std::vector<double> pixels;  // (y, x, c), values clamped to [0,1]
    std::vector<Box> lesion_boxes;
    std::vector<Box> artifact_rects;  // localized artifacts only, tint excluded
    std::map<std::string, bool> bias_truth;
};

struct GeneratedDataset {
    std::filesystem::path train_manifest;
    std::filesystem::path val_manifest;
    std::filesystem::path test_manifest;
};

// INI-style key = value file; `artifact = name,kind,rho_p,rho_n,magnitude`
// lines may repeat.
GenConfig load_gen_config(const std::filesystem::path& path);
void validate(const GenConfig& config);

// Deterministic per-sample rendering (seed mixed with the split salt and the
// local index). Labels alternate +1/-1 by index; lesions go to positives
// only; localized artifacts land in lesion-free tiles.
RenderedSample render_sample(const GenConfig& config, const std::string& split_tag, int index);

// Emits 8-bit PNGs plus train/val/test manifests with bias_truth, and echoes
// the generator config into the output directory.
GeneratedDataset generate(const GenConfig& config, const std::filesystem::path& out_dir);

std::map<std::string, bool> truth_column(const Manifest& manifest, const std::string& artifact);

// AUC of |median-centered first-direction projection| against ground-truth
// artifact presence.
double artifact_separation_auc(const EmbeddingTable& table, const DirectionBundle& bundle,
                               const std::map<std::string, bool>& truth_by_id);

}  // namespace biaslens
