#include "biaslens/selector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "biaslens/errors.hpp"
#include "biaslens/io.hpp"

namespace biaslens {

namespace {

double median_of(std::vector<double> values) {
    const std::size_t n = values.size();
    std::sort(values.begin(), values.end());
    if (n % 2 == 1) return values[n / 2];
    return (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

double center_of(const std::vector<double>& values, CenterMode mode) {
    switch (mode) {
        case CenterMode::median: return median_of(values);
        case CenterMode::mean: {
            double sum = 0.0;
            for (double v : values) sum += v;
            return sum / static_cast<double>(values.size());
        }
        case CenterMode::none: return 0.0;
    }
    return 0.0;
}

std::vector<std::string> table_ids(const EmbeddingTable& table) {
    std::vector<std::string> ids;
    ids.reserve(table.rows.size());
    for (const auto& row : table.rows) ids.push_back(row.sample_id);
    return ids;
}

}  // namespace

CenterMode parse_center_mode(const std::string& name) {
    if (name == "median") return CenterMode::median;
    if (name == "mean") return CenterMode::mean;
    if (name == "none") return CenterMode::none;
    throw UsageError("unknown center mode '" + name + "' (expected median|mean|none)");
}

BiasedSplit select_biased_on_projections(const std::vector<std::string>& ids,
                                         const Eigen::MatrixXd& projections, double theta,
                                         CenterMode center) {
    if (!(theta > 0.0 && theta < 1.0)) {
        throw UsageError("theta must be in (0,1), got " + std::to_string(theta));
    }
    const std::size_t n = ids.size();
    if (n == 0 || projections.rows() != static_cast<Eigen::Index>(n)) {
        throw DataError("projection rows do not match id count");
    }

    const std::size_t take = static_cast<std::size_t>(
        std::ceil(theta * static_cast<double>(n)));

    BiasedSplit split;
    split.theta = theta;
    split.k_used = static_cast<int>(projections.cols());

    std::vector<std::size_t> order(n);
    std::vector<double> column(n);
    for (Eigen::Index c = 0; c < projections.cols(); ++c) {
        for (std::size_t i = 0; i < n; ++i) column[i] = projections(static_cast<Eigen::Index>(i), c);
        const double centre = center_of(column, center);
        for (std::size_t i = 0; i < n; ++i) column[i] = std::abs(column[i] - centre);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (column[a] != column[b]) return column[a] > column[b];
            return ids[a] < ids[b];
        });
        for (std::size_t i = 0; i < take && i < n; ++i) split.biased_ids.insert(ids[order[i]]);
    }
    for (const auto& id : ids) {
        if (!split.biased_ids.count(id)) split.rest_ids.insert(id);
    }
    return split;
}

BiasedSplit select_biased(const EmbeddingTable& table, const DirectionBundle& bundle,
                          double theta, int k_used, CenterMode center) {
    if (k_used < 1 || k_used > bundle.k()) {
        throw UsageError("k_used=" + std::to_string(k_used) + " must be in [1, " +
                         std::to_string(bundle.k()) + "]");
    }
    const Eigen::MatrixXd proj = project(table, bundle).leftCols(k_used);
    BiasedSplit split = select_biased_on_projections(table_ids(table), proj, theta, center);
    split.k_used = k_used;
    split.polarity = polarity_name(bundle.polarity);
    return split;
}

BiasedSplit select_biased(const EmbeddingTable& table,
                          const std::vector<const DirectionBundle*>& bundles, double theta,
                          int k_used, CenterMode center) {
    if (bundles.empty()) throw UsageError("no direction bundles given");
    BiasedSplit merged;
    merged.theta = theta;
    merged.k_used = k_used;
    merged.polarity = bundles.size() > 1 ? "both" : polarity_name(bundles[0]->polarity);
    for (const DirectionBundle* bundle : bundles) {
        BiasedSplit part = select_biased(table, *bundle, theta, k_used, center);
        merged.biased_ids.insert(part.biased_ids.begin(), part.biased_ids.end());
    }
    for (const auto& id : table_ids(table)) {
        if (!merged.biased_ids.count(id)) merged.rest_ids.insert(id);
    }
    return merged;
}

Manifest debias_manifest(const Manifest& manifest, const BiasedSplit& split) {
    std::set<std::string> known;
    for (const auto& entry : manifest.entries) known.insert(entry.id);
    for (const auto& id : split.biased_ids) {
        if (!known.count(id)) {
            throw DataError("biased split references unknown id '" + id + "'");
        }
    }
    Manifest out;
    out.split = manifest.split;
    out.base_dir = manifest.base_dir;
    for (const auto& entry : manifest.entries) {
        if (!split.biased_ids.count(entry.id)) out.entries.push_back(entry);
    }
    return out;
}

DirectionBundle pca_directions(const EmbeddingTable& table, Polarity polarity, int k) {
    const int K = table.embedding_dim;
    if (k < 1 || k > K) {
        throw UsageError("PCA component count k=" + std::to_string(k) + " must be in [1, K=" +
                         std::to_string(K) + "]");
    }
    const int self = polarity == Polarity::positive ? 1 : -1;
    std::vector<const EmbeddingRow*> rows;
    for (const auto& row : table.rows) {
        if (row.label == self) rows.push_back(&row);
    }
    if (rows.size() < 2) {
        throw DataError("PCA needs at least 2 rows with label " + std::to_string(self));
    }

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(K);
    for (const auto* row : rows) mean += Eigen::Map<const Eigen::VectorXd>(row->u.data(), K);
    mean /= static_cast<double>(rows.size());

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(K, K);
    for (const auto* row : rows) {
        const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(row->u.data(), K) - mean;
        cov.noalias() += d * d.transpose();
    }
    cov /= static_cast<double>(rows.size());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw NumericError("PCA eigendecomposition failed");

    DirectionBundle bundle;
    bundle.polarity = polarity;
    bundle.ridge = 0.0;
    bundle.phi.resize(k, K);
    bundle.lambdas.resize(k);
    // SelfAdjointEigenSolver returns ascending eigenvalues; take the top k.
    for (int i = 0; i < k; ++i) {
        Eigen::VectorXd v = solver.eigenvectors().col(K - 1 - i);
        int best = 0;
        for (int j = 1; j < K; ++j) {
            if (std::abs(v[j]) > std::abs(v[best])) best = j;
        }
        if (v[best] < 0.0) v = -v;
        bundle.phi.row(i) = v.transpose();
        bundle.lambdas[i] = solver.eigenvalues()[K - 1 - i];
    }
    return bundle;
}

Eigen::MatrixXd color_attributes(const Manifest& manifest, const ImageShape& shape) {
    Eigen::MatrixXd means(static_cast<Eigen::Index>(manifest.entries.size()), shape.channels);
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const Sample sample = load_sample(manifest, manifest.entries[i], shape);
        for (int c = 0; c < shape.channels; ++c) {
            double sum = 0.0;
            for (int y = 0; y < sample.height; ++y) {
                for (int x = 0; x < sample.width; ++x) sum += sample.at(y, x, c);
            }
            means(static_cast<Eigen::Index>(i), c) =
                sum / (static_cast<double>(sample.height) * sample.width);
        }
    }
    return means;
}

void save_split(const std::filesystem::path& path, const BiasedSplit& split) {
    nlohmann::json j;
    j["theta"] = split.theta;
    j["k_used"] = split.k_used;
    j["polarity"] = split.polarity;
    j["biased_ids"] = std::vector<std::string>(split.biased_ids.begin(), split.biased_ids.end());
    io::atomic_write(path, [&](std::ostream& out) { out << j.dump(2) << "\n"; });
}

BiasedSplit load_split(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open split: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": JSON parse error: " + e.what());
    }
    BiasedSplit split;
    split.theta = j.at("theta").get<double>();
    split.k_used = j.at("k_used").get<int>();
    split.polarity = j.at("polarity").get<std::string>();
    for (const auto& id : j.at("biased_ids")) split.biased_ids.insert(id.get<std::string>());
    return split;
}

}  // namespace biaslens
