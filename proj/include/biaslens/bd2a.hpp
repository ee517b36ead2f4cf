#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <utility>
#include <vector>

#include "biaslens/klotski.hpp"

namespace biaslens {

enum class Polarity { positive, negative };

const char* polarity_name(Polarity p);

// Scatter of the self-label embeddings about their own mean, and scatter of
// the other-label embeddings about that same mean. polarity=negative swaps
// which label is "self".
struct ScatterPair {
    Eigen::MatrixXd s_self;
    Eigen::MatrixXd s_cross;
    Eigen::VectorXd mean_self;
    Polarity polarity = Polarity::positive;
    int n_self = 0;
    int n_other = 0;
};

// Ordered discriminant directions. Row i of phi is the i-th direction; for
// bundles produced by solve_directions every row satisfies
// phi_i' (s_self + ridge I) phi_i = 1 and rows are conjugate-orthogonal.
struct DirectionBundle {
    Polarity polarity = Polarity::positive;
    Eigen::MatrixXd phi;      // k x K, row-stacked
    Eigen::VectorXd lambdas;  // nonincreasing
    double ridge = 0.0;       // regularization actually applied (0 for PCA bundles)

    int k() const { return static_cast<int>(phi.rows()); }
    int dim() const { return static_cast<int>(phi.cols()); }
};

ScatterPair compute_scatter(const EmbeddingTable& table, Polarity polarity);

// Trace-scaled ridge applied to the self scatter before inverting:
// max(1e-10, 1e-6 * trace / K).
double ridge_value(const Eigen::MatrixXd& s_self);

// Discriminant criterion (phi' S_cross phi) / (phi' S_self_reg phi).
double criterion(const Eigen::VectorXd& phi, const ScatterPair& scatter);

// Solves the generalized eigenproblem S_cross phi = lambda S_self_reg phi for
// the leading direction, then iterates [I - S_self_reg Phi' Phi] S_cross phi
// = lambda S_self_reg phi for subsequent ones, renormalizing each direction
// and verifying the conjugate-orthogonality residuals.
DirectionBundle solve_directions(const ScatterPair& scatter, int k);

// Row n, column i of the result is phi_i' u_n.
Eigen::MatrixXd project(const EmbeddingTable& table, const DirectionBundle& bundle);

// (k, lambda_k) pairs for the criterion-vs-k curve.
std::vector<std::pair<int, double>> criterion_curve(const ScatterPair& scatter, int k_max);

// Persistence: magic "BLDB", version, polarity u8, k, K, ridge f64,
// lambdas (k f64), phi row-major (k*K f64).
void save_bundle(const std::filesystem::path& path, const DirectionBundle& bundle);
DirectionBundle load_bundle(const std::filesystem::path& path);

void export_curve_csv(const std::filesystem::path& path,
                      const std::vector<std::pair<int, double>>& curve);

}  // namespace biaslens
