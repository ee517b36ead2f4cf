#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "biaslens/bd2a.hpp"
#include "biaslens/dataset.hpp"
#include "biaslens/klotski.hpp"

namespace biaslens {

// How projections are centered before taking absolute values. The top-theta
// rule ranks |projection - center| per direction.
enum class CenterMode { median, mean, none };

CenterMode parse_center_mode(const std::string& name);

struct BiasedSplit {
    std::set<std::string> biased_ids;
    std::set<std::string> rest_ids;
    double theta = 0.0;
    int k_used = 0;
    std::string polarity;  // "positive", "negative", "both", or a baseline tag
};

// Core top-theta rule: per column of `projections`, center, rank by absolute
// centered value (ties broken by ascending id) and mark the top
// ceil(theta * N) ids; the biased set is the union over columns.
BiasedSplit select_biased_on_projections(const std::vector<std::string>& ids,
                                         const Eigen::MatrixXd& projections, double theta,
                                         CenterMode center);

BiasedSplit select_biased(const EmbeddingTable& table, const DirectionBundle& bundle,
                          double theta, int k_used, CenterMode center = CenterMode::median);

// Union over both polarities' bundles.
BiasedSplit select_biased(const EmbeddingTable& table,
                          const std::vector<const DirectionBundle*>& bundles, double theta,
                          int k_used, CenterMode center = CenterMode::median);

// Manifest minus the biased ids, order preserved.
Manifest debias_manifest(const Manifest& manifest, const BiasedSplit& split);

// PCA baseline: top-k principal components of the polarity-label embeddings,
// unit Euclidean norm (no conjugate normalization), eigenvalues as lambdas.
DirectionBundle pca_directions(const EmbeddingTable& table, Polarity polarity, int k);

// Per-channel mean intensity per sample, rows aligned with manifest order.
Eigen::MatrixXd color_attributes(const Manifest& manifest, const ImageShape& shape);

// Persistence: {"theta":..., "k_used":..., "polarity":..., "biased_ids":[...]}.
// rest_ids are recomputed against a universe on load.
void save_split(const std::filesystem::path& path, const BiasedSplit& split);
BiasedSplit load_split(const std::filesystem::path& path);

}  // namespace biaslens
