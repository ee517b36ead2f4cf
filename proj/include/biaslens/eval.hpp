#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "biaslens/klotski.hpp"
#include "biaslens/selector.hpp"

namespace biaslens {

// Metrics that cannot be computed on a partition (empty, single-class, or an
// empty prediction denominator) stay unset and are reported as nulls.
struct Metrics {
    std::optional<double> accuracy;
    std::optional<double> precision_pos;
    std::optional<double> recall_pos;
    std::optional<double> precision_neg;
    std::optional<double> recall_neg;
    std::optional<double> roc_auc;
    int n = 0;
};

struct PredictionRow {
    std::string id;
    int label = 0;      // ground truth
    int predicted = 0;  // model output
    double score = 0.0; // q_p of the key tile, used for ROC-AUC
};

// drop = metric(rest) - metric(biased), defined only when both sides are.
struct DropReport {
    Metrics rest;
    Metrics biased;
    std::optional<double> drop_accuracy;
    std::optional<double> drop_precision_pos;
    std::optional<double> drop_recall_pos;
    std::optional<double> drop_precision_neg;
    std::optional<double> drop_recall_neg;
    std::optional<double> drop_auc;
    // Per-attribute convention: a positive attribute reports the
    // negative-class precision/recall drops, and vice versa.
    std::optional<double> attr_precision_drop;
    std::optional<double> attr_recall_drop;
};

struct SweepRow {
    std::string polarity;
    int direction = 0;  // 1-based
    DropReport report;
};

// Downstream max-pooling MIL classifier: per sample, every tile is scored,
// the tile with maximum q_p is selected and one SGD step taken with the
// sample label. Requires both labels in the manifest.
KlotskiResult train_mil(const Manifest& train, const KlotskiConfig& config,
                        const Manifest* val = nullptr);

// Sample-level MIL predictions over a manifest (max-q_p tile; +1 iff its
// q_p > q_n).
std::vector<PredictionRow> predict_mil(const ScorerModel& model, const Manifest& manifest,
                                       const KlotskiConfig& config);

// Standard definitions; ROC-AUC is the Mann-Whitney rank statistic with ties
// counted one half.
Metrics compute_metrics(const std::vector<PredictionRow>& predictions);

// Mann-Whitney AUC with midranks; nullopt when either class is absent.
std::optional<double> rank_auc(const std::vector<double>& scores,
                               const std::vector<char>& is_positive);

// Splits predictions by the biased id set and reports all six drops.
// `attribute_polarity` ("positive"/"negative") selects which class's
// precision/recall pair fills the attr_* fields.
DropReport performance_drop(const std::vector<PredictionRow>& predictions,
                            const BiasedSplit& split,
                            const std::string& attribute_polarity = "");

// One single-direction drop per direction of the bundle.
std::vector<SweepRow> attribute_sweep(const std::vector<PredictionRow>& predictions,
                                      const EmbeddingTable& table, const DirectionBundle& bundle,
                                      double theta, CenterMode center = CenterMode::median);

// Baseline sweep treating each raw embedding coordinate as a direction.
std::vector<SweepRow> raw_coordinate_sweep(const std::vector<PredictionRow>& predictions,
                                           const EmbeddingTable& table, double theta,
                                           CenterMode center = CenterMode::median);

// Retrains the MIL model on the manifest minus the biased ids.
KlotskiResult retrain_debiased(const Manifest& train, const BiasedSplit& split,
                               const KlotskiConfig& config, const Manifest* val = nullptr);

void export_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

}  // namespace biaslens
