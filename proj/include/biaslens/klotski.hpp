#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "biaslens/dataset.hpp"
#include "biaslens/scorer.hpp"
#include "biaslens/tiler.hpp"

namespace biaslens {

struct EmbeddingRow {
    std::string sample_id;
    int label = 0;
    std::vector<double> u;
    int selected_tile_index = 0;  // grid index of the key tile
    Confidence selected_confidence;
};

struct EmbeddingTable {
    int embedding_dim = 0;  // K
    std::vector<EmbeddingRow> rows;
};

struct KlotskiConfig {
    ImageShape shape;
    int grid_rows = 4;
    int grid_cols = 4;
    int embedding_dim = 64;
    int epochs = 20;
    double lr = 0.01;
    std::uint64_t seed = 0;
    int early_stop_patience = 5;      // epochs without improvement before stopping
    double early_stop_delta = 0.005;  // minimum val-accuracy improvement
    unsigned threads = 1;
};

struct TrainLog {
    std::vector<double> epoch_mean_loss;
    std::vector<double> epoch_val_accuracy;  // empty when no val manifest given
    std::vector<std::int64_t> selection_histogram;  // per grid index, all epochs
    int epochs_run = 0;
    int samples_skipped = 0;  // empty background set
};

struct KlotskiResult {
    ScorerModel model;
    TrainLog log;
};

// Max-confidence key-tile rule: j*_p = argmax q_p, j*_n = argmax q_n (lowest
// index wins ties); the positive candidate is chosen only when its q_p
// strictly exceeds the negative candidate's q_n. Returns the position within
// `tiles` and its confidence.
std::pair<int, Confidence> select_key_tile(const ScorerModel& model,
                                           const std::vector<Tile>& tiles);
std::pair<int, Confidence> select_key_index(const std::vector<Confidence>& confidences);

// Background-only MIL training: per epoch, per sample in seeded-shuffled
// order, score the sample's background tiles, pick the key tile, take one
// SGD step with the sample label. Samples without background tiles are
// skipped. Early-stops on a validation-accuracy plateau when `val` is given.
KlotskiResult train_klotski(const Manifest& train, const KlotskiConfig& config,
                            const Manifest* val = nullptr);

// Feature extraction: positives drop lesion tiles, negatives keep all tiles;
// the embedding is the key tile's penultimate activation vector.
// Returns nullopt when the sample has no background tiles.
std::optional<EmbeddingRow> extract_embedding(const ScorerModel& model, const Sample& sample,
                                              int grid_rows, int grid_cols);

EmbeddingTable extract_table(const ScorerModel& model, const Manifest& manifest,
                             const KlotskiConfig& config);

// Whole-sample prediction from the key background tile: +1 iff q_p > q_n,
// score is the key tile's q_p.
std::optional<std::pair<int, double>> infer_label(const ScorerModel& model, const Sample& sample,
                                                  int grid_rows, int grid_cols);

// Persistence: magic "BLEM", version, N, K, then per row
// id length + UTF-8 id, label i8, tile index u32, q_p f64, K little-endian f64.
void save_table(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable load_table(const std::filesystem::path& path);
void export_table_csv(const std::filesystem::path& path, const EmbeddingTable& table);

}  // namespace biaslens
