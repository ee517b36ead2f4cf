#include "biaslens/bd2a.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "biaslens/errors.hpp"
#include "biaslens/io.hpp"

namespace biaslens {

namespace {

constexpr std::uint32_t kBundleVersion = 1;
constexpr char kBundleMagic[4] = {'B', 'L', 'D', 'B'};
constexpr double kRidgeAbs = 1e-10;
constexpr double kRidgeRel = 1e-6;
constexpr double kImagTolerance = 1e-8;
constexpr double kConstraintTolerance = 1e-8;

int self_label(Polarity p) { return p == Polarity::positive ? 1 : -1; }

// Sign convention: the largest-magnitude coordinate (first on ties) is made
// positive, so directions are reproducible across eigensolver implementations.
void fix_sign(Eigen::VectorXd& phi) {
    int best = 0;
    for (int i = 1; i < phi.size(); ++i) {
        if (std::abs(phi[i]) > std::abs(phi[best])) best = i;
    }
    if (phi[best] < 0.0) phi = -phi;
}

}  // namespace

const char* polarity_name(Polarity p) {
    return p == Polarity::positive ? "positive" : "negative";
}

ScatterPair compute_scatter(const EmbeddingTable& table, Polarity polarity) {
    const int K = table.embedding_dim;
    const int self = self_label(polarity);

    int n_self = 0, n_other = 0;
    for (const auto& row : table.rows) (row.label == self ? n_self : n_other) += 1;
    if (n_self < 2 || n_other < 2) {
        throw DataError("scatter computation needs at least 2 rows per label, got " +
                        std::to_string(n_self) + " self / " + std::to_string(n_other) + " other");
    }

    ScatterPair scatter;
    scatter.polarity = polarity;
    scatter.n_self = n_self;
    scatter.n_other = n_other;
    scatter.mean_self = Eigen::VectorXd::Zero(K);
    for (const auto& row : table.rows) {
        if (row.label != self) continue;
        scatter.mean_self += Eigen::Map<const Eigen::VectorXd>(row.u.data(), K);
    }
    scatter.mean_self /= static_cast<double>(n_self);

    scatter.s_self = Eigen::MatrixXd::Zero(K, K);
    scatter.s_cross = Eigen::MatrixXd::Zero(K, K);
    for (const auto& row : table.rows) {
        const Eigen::VectorXd d =
            Eigen::Map<const Eigen::VectorXd>(row.u.data(), K) - scatter.mean_self;
        if (row.label == self) {
            scatter.s_self.noalias() += d * d.transpose();
        } else {
            scatter.s_cross.noalias() += d * d.transpose();
        }
    }
    scatter.s_self /= static_cast<double>(n_self);
    scatter.s_cross /= static_cast<double>(n_other);

    // symmetry is structural; keep it exact against accumulation order
    scatter.s_self = ((scatter.s_self + scatter.s_self.transpose()) / 2.0).eval();
    scatter.s_cross = ((scatter.s_cross + scatter.s_cross.transpose()) / 2.0).eval();
    return scatter;
}

double ridge_value(const Eigen::MatrixXd& s_self) {
    const double k = static_cast<double>(s_self.rows());
    return std::max(kRidgeAbs, kRidgeRel * s_self.trace() / k);
}

double criterion(const Eigen::VectorXd& phi, const ScatterPair& scatter) {
    const double ridge = ridge_value(scatter.s_self);
    const double denom = phi.dot(scatter.s_self * phi) + ridge * phi.squaredNorm();
    if (denom <= 0.0) throw NumericError("criterion denominator is not positive");
    return phi.dot(scatter.s_cross * phi) / denom;
}

DirectionBundle solve_directions(const ScatterPair& scatter, int k) {
    const int K = static_cast<int>(scatter.s_self.rows());
    if (k < 1 || k > K) {
        throw UsageError("direction count k=" + std::to_string(k) +
                         " must be in [1, K=" + std::to_string(K) + "]");
    }

    DirectionBundle bundle;
    bundle.polarity = scatter.polarity;
    bundle.ridge = ridge_value(scatter.s_self);
    bundle.phi = Eigen::MatrixXd::Zero(k, K);
    bundle.lambdas = Eigen::VectorXd::Zero(k);

    const Eigen::MatrixXd s_reg =
        scatter.s_self + bundle.ridge * Eigen::MatrixXd::Identity(K, K);
    const Eigen::LLT<Eigen::MatrixXd> llt(s_reg);
    if (llt.info() != Eigen::Success) {
        throw NumericError("regularized self scatter is not positive definite");
    }

    for (int step = 0; step < k; ++step) {
        Eigen::MatrixXd lhs;
        if (step == 0) {
            lhs = scatter.s_cross;
        } else {
            const auto phi_k = bundle.phi.topRows(step);
            lhs = (Eigen::MatrixXd::Identity(K, K) -
                   s_reg * phi_k.transpose() * phi_k) *
                  scatter.s_cross;
        }
        // reduce to a standard nonsymmetric eigenproblem through the
        // triangular factors of the regularized self scatter
        const Eigen::MatrixXd reduced = llt.solve(lhs);
        Eigen::EigenSolver<Eigen::MatrixXd> solver(reduced);
        if (solver.info() != Eigen::Success) {
            throw NumericError("eigensolver failed at direction " + std::to_string(step + 1));
        }

        int best = -1;
        double best_lambda = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < K; ++i) {
            const std::complex<double> ev = solver.eigenvalues()[i];
            if (std::abs(ev.imag()) > kImagTolerance * std::abs(ev.real())) continue;
            if (ev.real() > best_lambda) {
                best_lambda = ev.real();
                best = i;
            }
        }
        if (best < 0) {
            throw NumericError("no near-real eigenvalue at direction " + std::to_string(step + 1));
        }

        Eigen::VectorXd phi = solver.eigenvectors().col(best).real();
        const double norm_sq = phi.dot(s_reg * phi);
        if (!(norm_sq > 0.0) || !std::isfinite(norm_sq)) {
            throw NumericError("degenerate eigenvector at direction " + std::to_string(step + 1));
        }
        phi /= std::sqrt(norm_sq);
        fix_sign(phi);

        // Eq. 6/8 residuals; a violation means the eigensolve went bad.
        for (int i = 0; i < step; ++i) {
            const double residual = std::abs(bundle.phi.row(i).dot(s_reg * phi));
            if (residual > kConstraintTolerance) {
                throw NumericError("conjugate-orthogonality residual " + std::to_string(residual) +
                                   " between directions " + std::to_string(i + 1) + " and " +
                                   std::to_string(step + 1) + " exceeds tolerance");
            }
        }
        const double norm_residual = std::abs(phi.dot(s_reg * phi) - 1.0);
        if (norm_residual > kConstraintTolerance) {
            throw NumericError("normalization residual " + std::to_string(norm_residual) +
                               " at direction " + std::to_string(step + 1));
        }

        bundle.phi.row(step) = phi.transpose();
        bundle.lambdas[step] = best_lambda;
    }
    return bundle;
}

Eigen::MatrixXd project(const EmbeddingTable& table, const DirectionBundle& bundle) {
    if (table.embedding_dim != bundle.dim()) {
        throw DataError("embedding dimension " + std::to_string(table.embedding_dim) +
                        " does not match direction bundle dimension " +
                        std::to_string(bundle.dim()));
    }
    Eigen::MatrixXd out(static_cast<Eigen::Index>(table.rows.size()), bundle.k());
    for (std::size_t n = 0; n < table.rows.size(); ++n) {
        const Eigen::Map<const Eigen::VectorXd> u(table.rows[n].u.data(), table.embedding_dim);
        out.row(static_cast<Eigen::Index>(n)) = (bundle.phi * u).transpose();
    }
    return out;
}

std::vector<std::pair<int, double>> criterion_curve(const ScatterPair& scatter, int k_max) {
    const DirectionBundle bundle = solve_directions(scatter, k_max);
    std::vector<std::pair<int, double>> curve;
    curve.reserve(static_cast<std::size_t>(k_max));
    for (int i = 0; i < k_max; ++i) curve.emplace_back(i + 1, bundle.lambdas[i]);
    return curve;
}

void save_bundle(const std::filesystem::path& path, const DirectionBundle& bundle) {
    io::atomic_write(path, [&](std::ostream& out) {
        io::write_magic(out, kBundleMagic);
        io::write_u32(out, kBundleVersion);
        out.put(bundle.polarity == Polarity::positive ? '\0' : '\1');
        io::write_u32(out, static_cast<std::uint32_t>(bundle.k()));
        io::write_u32(out, static_cast<std::uint32_t>(bundle.dim()));
        io::write_f64(out, bundle.ridge);
        io::write_f64_array(out, bundle.lambdas.data(), static_cast<std::size_t>(bundle.k()));
        for (int i = 0; i < bundle.k(); ++i) {
            const Eigen::VectorXd row = bundle.phi.row(i);
            io::write_f64_array(out, row.data(), static_cast<std::size_t>(bundle.dim()));
        }
    });
}

DirectionBundle load_bundle(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open direction bundle: " + path.string());
    io::Reader reader(in, path.string());
    reader.expect_magic(kBundleMagic);
    const std::uint32_t version = reader.u32();
    if (version != kBundleVersion) {
        throw DataError(path.string() + ": unsupported bundle version " + std::to_string(version));
    }
    DirectionBundle bundle;
    bundle.polarity = reader.i8() == 0 ? Polarity::positive : Polarity::negative;
    const std::uint32_t k = reader.u32();
    const std::uint32_t dim = reader.u32();
    bundle.ridge = reader.f64();
    bundle.lambdas.resize(k);
    reader.f64_array(bundle.lambdas.data(), k);
    bundle.phi.resize(k, dim);
    std::vector<double> row(dim);
    for (std::uint32_t i = 0; i < k; ++i) {
        reader.f64_array(row.data(), dim);
        bundle.phi.row(i) = Eigen::Map<const Eigen::VectorXd>(row.data(), dim).transpose();
    }
    return bundle;
}

void export_curve_csv(const std::filesystem::path& path,
                      const std::vector<std::pair<int, double>>& curve) {
    io::atomic_write(path, [&](std::ostream& out) {
        out << "k,lambda\n";
        char buf[40];
        for (const auto& [k, lambda] : curve) {
            std::snprintf(buf, sizeof(buf), "%.17g", lambda);
            out << k << "," << buf << "\n";
        }
    });
}

}  // namespace biaslens
