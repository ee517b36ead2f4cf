#include "biaslens/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "biaslens/errors.hpp"
#include "biaslens/io.hpp"
#include "biaslens/log.hpp"
#include "biaslens/parallel.hpp"
#include "biaslens/rng.hpp"

namespace biaslens {

namespace {

struct CachedMilSample {
    std::string id;
    int label = 0;
    std::vector<Tile> tiles;  // all tiles, lesion tiles included
};

std::vector<CachedMilSample> cache_all_tiles(const Manifest& manifest,
                                             const KlotskiConfig& config) {
    std::vector<CachedMilSample> cached(manifest.entries.size());
    parallel_for(manifest.entries.size(), config.threads, [&](std::size_t i) {
        const Sample sample = load_sample(manifest, manifest.entries[i], config.shape);
        TileSet set = split(sample, config.grid_rows, config.grid_cols);
        cached[i].id = sample.id;
        cached[i].label = sample.label;
        cached[i].tiles = std::move(set.tiles);
    });
    return cached;
}

// Max-pooling MIL key tile: highest q_p, lowest index on ties.
std::pair<int, Confidence> max_qp_tile(const ScorerModel& model,
                                       const std::vector<Tile>& tiles) {
    int best = 0;
    Confidence best_conf = score(model, tiles[0]);
    for (int j = 1; j < static_cast<int>(tiles.size()); ++j) {
        const Confidence c = score(model, tiles[static_cast<std::size_t>(j)]);
        if (c.q_p > best_conf.q_p) {
            best = j;
            best_conf = c;
        }
    }
    return {best, best_conf};
}

double mil_accuracy(const ScorerModel& model, const std::vector<CachedMilSample>& samples,
                    unsigned threads) {
    std::vector<int> correct(samples.size(), 0);
    parallel_for(samples.size(), threads, [&](std::size_t i) {
        const auto [j, conf] = max_qp_tile(model, samples[i].tiles);
        (void)j;
        const int predicted = conf.q_p > conf.q_n ? 1 : -1;
        correct[i] = predicted == samples[i].label ? 1 : 0;
    });
    return static_cast<double>(std::accumulate(correct.begin(), correct.end(), 0)) /
           static_cast<double>(samples.size());
}

std::optional<double> ratio(int num, int den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

std::optional<double> minus(const std::optional<double>& a, const std::optional<double>& b) {
    if (!a || !b) return std::nullopt;
    return *a - *b;
}

void append_cell(std::string& line, const std::optional<double>& v) {
    line += ",";
    if (!v) return;
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", *v);
    line += buf;
}

}  // namespace

KlotskiResult train_mil(const Manifest& train, const KlotskiConfig& config, const Manifest* val) {
    if (config.lr <= 0.0) throw UsageError("learning rate must be positive");
    bool has_pos = false, has_neg = false;
    for (const auto& entry : train.entries) (entry.label == 1 ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) {
        throw DataError("MIL training needs both labels in the training manifest");
    }

    std::vector<CachedMilSample> samples = cache_all_tiles(train, config);
    std::vector<CachedMilSample> val_samples;
    if (val) val_samples = cache_all_tiles(*val, config);

    KlotskiResult result;
    result.log.selection_histogram.assign(
        static_cast<std::size_t>(config.grid_rows) * config.grid_cols, 0);
    const int tile_h = config.shape.height / config.grid_rows;
    const int tile_w = config.shape.width / config.grid_cols;
    result.model = init_model(stage_seed(config.seed, "mil-init"), config.embedding_dim, tile_h,
                              tile_w, config.shape.channels);

    Rng shuffle_rng(stage_seed(config.seed, "mil-shuffle"));
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);

    double best_val = -1.0;
    int stall = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            const CachedMilSample& s = samples[order[pos]];
            const auto [j, conf] = max_qp_tile(result.model, s.tiles);
            (void)conf;
            const Tile& key = s.tiles[static_cast<std::size_t>(j)];
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
            const double acc = mil_accuracy(result.model, val_samples, config.threads);
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
        }
    }
    result.model.tag = "mil";
    return result;
}

std::vector<PredictionRow> predict_mil(const ScorerModel& model, const Manifest& manifest,
                                       const KlotskiConfig& config) {
    std::vector<PredictionRow> rows(manifest.entries.size());
    parallel_for(manifest.entries.size(), config.threads, [&](std::size_t i) {
        const Sample sample = load_sample(manifest, manifest.entries[i], config.shape);
        TileSet set = split(sample, config.grid_rows, config.grid_cols);
        const auto [j, conf] = max_qp_tile(model, set.tiles);
        (void)j;
        rows[i] = PredictionRow{sample.id, sample.label, conf.q_p > conf.q_n ? 1 : -1, conf.q_p};
    });
    return rows;
}

std::optional<double> rank_auc(const std::vector<double>& scores,
                               const std::vector<char>& is_positive) {
    const std::size_t n = scores.size();
    if (n == 0 || is_positive.size() != n) return std::nullopt;
    std::size_t n_pos = 0;
    for (char f : is_positive) n_pos += f ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    // Mann-Whitney with midranks; ties contribute one half per pair.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = midrank;
        i = j + 1;
    }
    double rank_sum_pos = 0.0;
    for (std::size_t idx = 0; idx < n; ++idx) {
        if (is_positive[idx]) rank_sum_pos += rank[idx];
    }
    return (rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0) /
           (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

Metrics compute_metrics(const std::vector<PredictionRow>& predictions) {
    if (predictions.empty()) return Metrics{};
    for (const auto& p : predictions) {
        if (p.label != -1 && p.label != 1) throw DataError("prediction label outside {-1,+1}");
    }

    Metrics m;
    m.n = static_cast<int>(predictions.size());
    int tp = 0, fp = 0, tn = 0, fn = 0;
    for (const auto& p : predictions) {
        if (p.label == 1) {
            (p.predicted == 1 ? tp : fn) += 1;
        } else {
            (p.predicted == -1 ? tn : fp) += 1;
        }
    }
    m.accuracy = ratio(tp + tn, m.n);
    m.precision_pos = ratio(tp, tp + fp);
    m.recall_pos = ratio(tp, tp + fn);
    m.precision_neg = ratio(tn, tn + fn);
    m.recall_neg = ratio(tn, tn + fp);

    std::vector<double> scores(predictions.size());
    std::vector<char> flags(predictions.size());
    for (std::size_t idx = 0; idx < predictions.size(); ++idx) {
        scores[idx] = predictions[idx].score;
        flags[idx] = predictions[idx].label == 1 ? 1 : 0;
    }
    m.roc_auc = rank_auc(scores, flags);
    return m;
}

DropReport performance_drop(const std::vector<PredictionRow>& predictions,
                            const BiasedSplit& split, const std::string& attribute_polarity) {
    std::set<std::string> seen;
    for (const auto& p : predictions) seen.insert(p.id);
    for (const auto& id : split.biased_ids) {
        if (!seen.count(id)) throw DataError("biased split references unknown id '" + id + "'");
    }

    std::vector<PredictionRow> biased, rest;
    for (const auto& p : predictions) {
        (split.biased_ids.count(p.id) ? biased : rest).push_back(p);
    }

    DropReport report;
    report.biased = compute_metrics(biased);
    report.rest = compute_metrics(rest);
    report.drop_accuracy = minus(report.rest.accuracy, report.biased.accuracy);
    report.drop_precision_pos = minus(report.rest.precision_pos, report.biased.precision_pos);
    report.drop_recall_pos = minus(report.rest.recall_pos, report.biased.recall_pos);
    report.drop_precision_neg = minus(report.rest.precision_neg, report.biased.precision_neg);
    report.drop_recall_neg = minus(report.rest.recall_neg, report.biased.recall_neg);
    report.drop_auc = minus(report.rest.roc_auc, report.biased.roc_auc);
    if (attribute_polarity == "positive") {
        report.attr_precision_drop = report.drop_precision_neg;
        report.attr_recall_drop = report.drop_recall_neg;
    } else if (attribute_polarity == "negative") {
        report.attr_precision_drop = report.drop_precision_pos;
        report.attr_recall_drop = report.drop_recall_pos;
    }
    return report;
}

std::vector<SweepRow> attribute_sweep(const std::vector<PredictionRow>& predictions,
                                      const EmbeddingTable& table, const DirectionBundle& bundle,
                                      double theta, CenterMode center) {
    std::vector<std::string> ids;
    ids.reserve(table.rows.size());
    for (const auto& row : table.rows) ids.push_back(row.sample_id);

    const Eigen::MatrixXd proj = project(table, bundle);
    std::vector<SweepRow> rows;
    for (int d = 0; d < bundle.k(); ++d) {
        BiasedSplit split = select_biased_on_projections(ids, proj.col(d), theta, center);
        split.polarity = polarity_name(bundle.polarity);
        SweepRow row;
        row.polarity = split.polarity;
        row.direction = d + 1;
        row.report = performance_drop(predictions, split, split.polarity);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<SweepRow> raw_coordinate_sweep(const std::vector<PredictionRow>& predictions,
                                           const EmbeddingTable& table, double theta,
                                           CenterMode center) {
    std::vector<std::string> ids;
    ids.reserve(table.rows.size());
    for (const auto& row : table.rows) ids.push_back(row.sample_id);

    Eigen::MatrixXd coords(static_cast<Eigen::Index>(table.rows.size()), table.embedding_dim);
    for (std::size_t n = 0; n < table.rows.size(); ++n) {
        coords.row(static_cast<Eigen::Index>(n)) =
            Eigen::Map<const Eigen::VectorXd>(table.rows[n].u.data(), table.embedding_dim)
                .transpose();
    }

    std::vector<SweepRow> rows;
    for (int d = 0; d < table.embedding_dim; ++d) {
        BiasedSplit split = select_biased_on_projections(ids, coords.col(d), theta, center);
        split.polarity = "none";
        SweepRow row;
        row.polarity = "none";
        row.direction = d + 1;
        row.report = performance_drop(predictions, split, "");
        rows.push_back(std::move(row));
    }
    return rows;
}

KlotskiResult retrain_debiased(const Manifest& train, const BiasedSplit& split,
                               const KlotskiConfig& config, const Manifest* val) {
    const Manifest debiased = debias_manifest(train, split);
    log::info("debiased training set: ", debiased.entries.size(), " of ", train.entries.size(),
              " samples kept");
    KlotskiResult result = train_mil(debiased, config, val);
    result.model.tag = "debiased";
    return result;
}

void export_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
    io::atomic_write(path, [&](std::ostream& out) {
        out << "polarity,direction,drop_accuracy,drop_prec_pos,drop_rec_pos,drop_prec_neg,"
               "drop_rec_neg,drop_auc\n";
        for (const auto& row : rows) {
            std::string line = row.polarity + "," + std::to_string(row.direction);
            append_cell(line, row.report.drop_accuracy);
            append_cell(line, row.report.drop_precision_pos);
            append_cell(line, row.report.drop_recall_pos);
            append_cell(line, row.report.drop_precision_neg);
            append_cell(line, row.report.drop_recall_neg);
            append_cell(line, row.report.drop_auc);
            out << line << "\n";
        }
    });
}

}  // namespace biaslens
