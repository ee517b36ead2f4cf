#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "biaslens/dataset.hpp"
#include "biaslens/klotski.hpp"
#include "biaslens/kvconfig.hpp"
#include "biaslens/selector.hpp"

namespace biaslens {

// Everything a pipeline stage needs: hyper-parameters plus the artifact
// paths each stage reads and writes. Paths are resolved against the config
// file's directory.
struct PipelineConfig {
    ImageShape shape{80, 80, 1};
    int grid_rows = 4;
    int grid_cols = 4;
    int embedding_dim = 64;  // K
    int epochs = 20;
    double lr = 0.01;
    std::uint64_t seed = 42;
    double theta = 0.12;
    int k_directions = 5;
    CenterMode center = CenterMode::median;
    int early_stop_patience = 5;
    double early_stop_delta = 0.005;

    std::filesystem::path train_manifest;
    std::filesystem::path val_manifest;  // optional; empty disables early stop
    std::filesystem::path test_manifest;
    std::filesystem::path model_path;
    std::filesystem::path mil_model_path;
    std::filesystem::path debiased_model_path;
    std::filesystem::path embeddings_train;
    std::filesystem::path embeddings_test;
    std::filesystem::path directions_pos;
    std::filesystem::path directions_neg;
    std::filesystem::path split_test;
    std::filesystem::path split_train;
    std::filesystem::path report_path;
    std::filesystem::path report_debiased_path;
    std::filesystem::path sweep_prefix;  // <prefix>_bd2a.csv / _pca.csv / _raw.csv
    std::filesystem::path curve_prefix;  // <prefix>_pos.csv / _neg.csv

    // config as parsed, echoed verbatim into reports
    std::vector<KeyValue> raw;
};

PipelineConfig load_pipeline_config(const std::filesystem::path& path);
void validate(const PipelineConfig& config);

KlotskiConfig to_klotski_config(const PipelineConfig& config, unsigned threads);

}  // namespace biaslens
