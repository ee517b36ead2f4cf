#include "biaslens/klotski.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "biaslens/errors.hpp"
#include "biaslens/io.hpp"
#include "biaslens/log.hpp"
#include "biaslens/parallel.hpp"
#include "biaslens/rng.hpp"

namespace biaslens {

namespace {

constexpr std::uint32_t kTableVersion = 1;
constexpr char kTableMagic[4] = {'B', 'L', 'E', 'M'};

struct CachedSample {
    std::string id;
    int label = 0;
    std::vector<Tile> background;  // tiles at r_minus, original grid indices kept
    std::vector<int> r_minus;
};

// Tiles every sample once up front; samples with no background tiles are
// dropped here (Alg. 1/2 are undefined for them).
std::vector<CachedSample> cache_backgrounds(const Manifest& manifest, const KlotskiConfig& config,
                                            int* skipped) {
    std::vector<CachedSample> cached(manifest.entries.size());
    parallel_for(manifest.entries.size(), config.threads, [&](std::size_t i) {
        const Sample sample = load_sample(manifest, manifest.entries[i], config.shape);
        TileSet set = split(sample, config.grid_rows, config.grid_cols);
        CachedSample& c = cached[i];
        c.id = sample.id;
        c.label = sample.label;
        c.r_minus = set.r_minus;
        c.background = background_tiles(set);
    });
    std::vector<CachedSample> kept;
    kept.reserve(cached.size());
    for (auto& c : cached) {
        if (c.background.empty()) {
            log::info("skipping sample '", c.id, "': no background tiles");
            if (skipped) ++*skipped;
            continue;
        }
        kept.push_back(std::move(c));
    }
    return kept;
}

std::vector<Confidence> score_all(const ScorerModel& model, const std::vector<Tile>& tiles) {
    std::vector<Confidence> out(tiles.size());
    for (std::size_t j = 0; j < tiles.size(); ++j) out[j] = score(model, tiles[j]);
    return out;
}

double validation_accuracy(const ScorerModel& model, const std::vector<CachedSample>& val,
                           unsigned threads) {
    if (val.empty()) return 0.0;
    std::vector<int> correct(val.size(), 0);
    parallel_for(val.size(), threads, [&](std::size_t i) {
        const auto confidences = score_all(model, val[i].background);
        const auto [j, conf] = select_key_index(confidences);
        (void)j;
        const int predicted = conf.q_p > conf.q_n ? 1 : -1;
        correct[i] = predicted == val[i].label ? 1 : 0;
    });
    const int hits = std::accumulate(correct.begin(), correct.end(), 0);
    return static_cast<double>(hits) / static_cast<double>(val.size());
}

void append_f64_csv(std::string& line, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    line += buf;
}

}  // namespace

std::pair<int, Confidence> select_key_index(const std::vector<Confidence>& confidences) {
    if (confidences.empty()) throw DataError("key-tile selection over an empty tile list");
    int jp = 0, jn = 0;
    for (int j = 1; j < static_cast<int>(confidences.size()); ++j) {
        if (confidences[j].q_p > confidences[jp].q_p) jp = j;
        if (confidences[j].q_n > confidences[jn].q_n) jn = j;
    }
    const int j_star = confidences[jp].q_p > confidences[jn].q_n ? jp : jn;
    return {j_star, confidences[j_star]};
}

std::pair<int, Confidence> select_key_tile(const ScorerModel& model,
                                           const std::vector<Tile>& tiles) {
    return select_key_index(score_all(model, tiles));
}

KlotskiResult train_klotski(const Manifest& train, const KlotskiConfig& config,
                            const Manifest* val) {
    if (config.lr <= 0.0) throw UsageError("learning rate must be positive");
    if (config.epochs < 1) throw UsageError("epoch count must be >= 1");

    KlotskiResult result;
    result.log.selection_histogram.assign(
        static_cast<std::size_t>(config.grid_rows) * config.grid_cols, 0);

    std::vector<CachedSample> samples =
        cache_backgrounds(train, config, &result.log.samples_skipped);
    if (samples.empty()) throw DataError("no trainable samples in manifest");

    std::vector<CachedSample> val_samples;
    if (val) {
        int val_skipped = 0;
        val_samples = cache_backgrounds(*val, config, &val_skipped);
    }

    const int tile_h = config.shape.height / config.grid_rows;
    const int tile_w = config.shape.width / config.grid_cols;
    result.model = init_model(stage_seed(config.seed, "scorer-init"), config.embedding_dim,
                              tile_h, tile_w, config.shape.channels);

    Rng shuffle_rng(stage_seed(config.seed, "train-shuffle"));
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);

    double best_val = -1.0;
    int stall = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            const CachedSample& s = samples[order[pos]];
            const auto confidences = score_all(result.model, s.background);
            const auto [j, conf] = select_key_index(confidences);
            (void)conf;
            const Tile& key = s.background[static_cast<std::size_t>(j)];
            // no-leakage: a positive sample's key tile must be a background tile
            assert(std::find(s.r_minus.begin(), s.r_minus.end(), key.index) != s.r_minus.end());
            result.log.selection_histogram[static_cast<std::size_t>(key.index)] += 1;
            try {
                loss_sum += train_step(result.model, key, s.label, config.lr);
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + ", sample '" + s.id +
                                   "': " + e.what());
            }
        }
        result.log.epoch_mean_loss.push_back(loss_sum / static_cast<double>(samples.size()));
        result.log.epochs_run = epoch + 1;

        if (!val_samples.empty()) {
            const double acc = validation_accuracy(result.model, val_samples, config.threads);
            result.log.epoch_val_accuracy.push_back(acc);
            log::debug("epoch ", epoch + 1, " mean loss ", result.log.epoch_mean_loss.back(),
                       ", val accuracy ", acc);
            if (acc > best_val + config.early_stop_delta) {
                best_val = acc;
                stall = 0;
            } else {
                best_val = std::max(best_val, acc);
                ++stall;
                if (stall >= config.early_stop_patience) {
                    log::info("early stop after epoch ", epoch + 1, " (val accuracy plateau)");
                    break;
                }
            }
        } else {
            log::debug("epoch ", epoch + 1, " mean loss ", result.log.epoch_mean_loss.back());
        }
    }
    return result;
}

std::optional<EmbeddingRow> extract_embedding(const ScorerModel& model, const Sample& sample,
                                              int grid_rows, int grid_cols) {
    TileSet set = split(sample, grid_rows, grid_cols);
    // Alg. 2: negatives use every tile, labeled positives drop lesion tiles.
    std::vector<Tile> candidates =
        sample.label == -1 ? std::move(set.tiles) : background_tiles(set);
    if (candidates.empty()) {
        log::info("skipping sample '", sample.id, "': no background tiles for extraction");
        return std::nullopt;
    }
    const auto [j, conf] = select_key_tile(model, candidates);
    const Tile& key = candidates[static_cast<std::size_t>(j)];
    if (sample.label == 1) {
        assert(!key.contains_lesion);
    }
    EmbeddingRow row;
    row.sample_id = sample.id;
    row.label = sample.label;
    row.selected_tile_index = key.index;
    row.selected_confidence = conf;
    row.u = embed(model, key);
    return row;
}

EmbeddingTable extract_table(const ScorerModel& model, const Manifest& manifest,
                             const KlotskiConfig& config) {
    std::vector<std::optional<EmbeddingRow>> rows(manifest.entries.size());
    parallel_for(manifest.entries.size(), config.threads, [&](std::size_t i) {
        const Sample sample = load_sample(manifest, manifest.entries[i], config.shape);
        rows[i] = extract_embedding(model, sample, config.grid_rows, config.grid_cols);
    });
    EmbeddingTable table;
    table.embedding_dim = model.arch.embedding_dim;
    for (auto& row : rows) {
        if (row) table.rows.push_back(std::move(*row));
    }
    return table;
}

std::optional<std::pair<int, double>> infer_label(const ScorerModel& model, const Sample& sample,
                                                  int grid_rows, int grid_cols) {
    TileSet set = split(sample, grid_rows, grid_cols);
    std::vector<Tile> candidates =
        sample.label == -1 ? std::move(set.tiles) : background_tiles(set);
    if (candidates.empty()) return std::nullopt;
    const auto [j, conf] = select_key_tile(model, candidates);
    (void)j;
    return std::make_pair(conf.q_p > conf.q_n ? 1 : -1, conf.q_p);
}

void save_table(const std::filesystem::path& path, const EmbeddingTable& table) {
    io::atomic_write(path, [&](std::ostream& out) {
        io::write_magic(out, kTableMagic);
        io::write_u32(out, kTableVersion);
        io::write_u64(out, table.rows.size());
        io::write_u32(out, static_cast<std::uint32_t>(table.embedding_dim));
        for (const auto& row : table.rows) {
            io::write_u32(out, static_cast<std::uint32_t>(row.sample_id.size()));
            out.write(row.sample_id.data(), static_cast<std::streamsize>(row.sample_id.size()));
            io::write_i8(out, static_cast<std::int8_t>(row.label));
            io::write_u32(out, static_cast<std::uint32_t>(row.selected_tile_index));
            io::write_f64(out, row.selected_confidence.q_p);
            io::write_f64_array(out, row.u.data(), row.u.size());
        }
    });
}

EmbeddingTable load_table(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open embedding table: " + path.string());
    io::Reader reader(in, path.string());
    reader.expect_magic(kTableMagic);
    const std::uint32_t version = reader.u32();
    if (version != kTableVersion) {
        throw DataError(path.string() + ": unsupported table version " + std::to_string(version));
    }
    const std::uint64_t n = reader.u64();
    EmbeddingTable table;
    table.embedding_dim = static_cast<int>(reader.u32());
    table.rows.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        EmbeddingRow& row = table.rows[i];
        const std::uint32_t id_len = reader.u32();
        row.sample_id = reader.str(id_len);
        row.label = reader.i8();
        if (row.label != -1 && row.label != 1) {
            throw DataError(path.string() + ": row label outside {-1,+1}");
        }
        row.selected_tile_index = static_cast<int>(reader.u32());
        row.selected_confidence.q_p = reader.f64();
        row.selected_confidence.q_n = 1.0 - row.selected_confidence.q_p;
        row.u.resize(static_cast<std::size_t>(table.embedding_dim));
        reader.f64_array(row.u.data(), row.u.size());
        for (double v : row.u) {
            if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite embedding");
        }
    }
    return table;
}

void export_table_csv(const std::filesystem::path& path, const EmbeddingTable& table) {
    io::atomic_write(path, [&](std::ostream& out) {
        std::string header = "id,label,tile_index,q_p";
        for (int k = 0; k < table.embedding_dim; ++k) header += ",u" + std::to_string(k);
        out << header << "\n";
        for (const auto& row : table.rows) {
            std::string line = row.sample_id + "," + std::to_string(row.label) + "," +
                               std::to_string(row.selected_tile_index) + ",";
            append_f64_csv(line, row.selected_confidence.q_p);
            for (double v : row.u) {
                line += ",";
                append_f64_csv(line, v);
            }
            out << line << "\n";
        }
    });
}

}  // namespace biaslens
