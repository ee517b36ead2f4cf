#include "biaslens/pipeline_config.hpp"

#include "biaslens/errors.hpp"

namespace biaslens {

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    PipelineConfig config;
    const std::filesystem::path base =
        path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    const auto resolve = [&](const std::string& value) -> std::filesystem::path {
        std::filesystem::path p(value);
        return p.is_absolute() ? p : base / p;
    };

    // path defaults live next to the config file
    config.model_path = resolve("artifacts/klotski.model");
    config.mil_model_path = resolve("artifacts/mil.model");
    config.debiased_model_path = resolve("artifacts/debiased.model");
    config.embeddings_train = resolve("artifacts/embeddings_train.bin");
    config.embeddings_test = resolve("artifacts/embeddings_test.bin");
    config.directions_pos = resolve("artifacts/directions_pos.bin");
    config.directions_neg = resolve("artifacts/directions_neg.bin");
    config.split_test = resolve("artifacts/split_test.json");
    config.split_train = resolve("artifacts/split_train.json");
    config.report_path = resolve("artifacts/report.json");
    config.report_debiased_path = resolve("artifacts/report_debiased.json");
    config.sweep_prefix = resolve("artifacts/sweep");
    config.curve_prefix = resolve("artifacts/curve");

    config.raw = parse_key_values(path);
    for (const KeyValue& kv : config.raw) {
        const std::string& key = kv.key;
        const std::string& value = kv.value;
        try {
            if (key == "image_h") config.shape.height = std::stoi(value);
            else if (key == "image_w") config.shape.width = std::stoi(value);
            else if (key == "channels") config.shape.channels = std::stoi(value);
            else if (key == "grid_rows") config.grid_rows = std::stoi(value);
            else if (key == "grid_cols") config.grid_cols = std::stoi(value);
            else if (key == "K") config.embedding_dim = std::stoi(value);
            else if (key == "epochs") config.epochs = std::stoi(value);
            else if (key == "lr") config.lr = std::stod(value);
            else if (key == "seed") config.seed = std::stoull(value);
            else if (key == "theta") config.theta = std::stod(value);
            else if (key == "k_directions") config.k_directions = std::stoi(value);
            else if (key == "center_mode") config.center = parse_center_mode(value);
            else if (key == "early_stop_patience") config.early_stop_patience = std::stoi(value);
            else if (key == "early_stop_delta") config.early_stop_delta = std::stod(value);
            else if (key == "train_manifest") config.train_manifest = resolve(value);
            else if (key == "val_manifest") config.val_manifest = resolve(value);
            else if (key == "test_manifest") config.test_manifest = resolve(value);
            else if (key == "model") config.model_path = resolve(value);
            else if (key == "mil_model") config.mil_model_path = resolve(value);
            else if (key == "debiased_model") config.debiased_model_path = resolve(value);
            else if (key == "embeddings_train") config.embeddings_train = resolve(value);
            else if (key == "embeddings_test") config.embeddings_test = resolve(value);
            else if (key == "directions_pos") config.directions_pos = resolve(value);
            else if (key == "directions_neg") config.directions_neg = resolve(value);
            else if (key == "split_test") config.split_test = resolve(value);
            else if (key == "split_train") config.split_train = resolve(value);
            else if (key == "report") config.report_path = resolve(value);
            else if (key == "report_debiased") config.report_debiased_path = resolve(value);
            else if (key == "sweep_prefix") config.sweep_prefix = resolve(value);
            else if (key == "curve_prefix") config.curve_prefix = resolve(value);
            else {
                throw UsageError("unknown key '" + key + "'");
            }
        } catch (const std::invalid_argument&) {
            throw UsageError(path.string() + ":" + std::to_string(kv.line) + ": bad value for '" +
                             key + "'");
        } catch (const UsageError& e) {
            throw UsageError(path.string() + ":" + std::to_string(kv.line) + ": " + e.what());
        }
    }
    validate(config);
    return config;
}

void validate(const PipelineConfig& config) {
    if (config.lr <= 0.0) throw UsageError("lr must be > 0");
    if (!(config.theta > 0.0 && config.theta < 1.0)) throw UsageError("theta must be in (0,1)");
    if (config.embedding_dim < 2) throw UsageError("K must be >= 2");
    if (config.k_directions < 1 || config.k_directions > config.embedding_dim) {
        throw UsageError("k_directions=" + std::to_string(config.k_directions) +
                         " must be in [1, K=" + std::to_string(config.embedding_dim) + "]");
    }
    if (config.epochs < 1) throw UsageError("epochs must be >= 1");
    if (config.grid_rows < 1 || config.grid_cols < 1 || config.grid_rows * config.grid_cols < 2) {
        throw UsageError("tile grid must have at least 2 tiles");
    }
    if (config.shape.height % config.grid_rows != 0 ||
        config.shape.width % config.grid_cols != 0) {
        throw UsageError("image size " + std::to_string(config.shape.height) + "x" +
                         std::to_string(config.shape.width) + " not divisible by grid " +
                         std::to_string(config.grid_rows) + "x" + std::to_string(config.grid_cols));
    }
}

KlotskiConfig to_klotski_config(const PipelineConfig& config, unsigned threads) {
    KlotskiConfig kc;
    kc.shape = config.shape;
    kc.grid_rows = config.grid_rows;
    kc.grid_cols = config.grid_cols;
    kc.embedding_dim = config.embedding_dim;
    kc.epochs = config.epochs;
    kc.lr = config.lr;
    kc.seed = config.seed;
    kc.early_stop_patience = config.early_stop_patience;
    kc.early_stop_delta = config.early_stop_delta;
    kc.threads = threads;
    return kc;
}

}  // namespace biaslens
